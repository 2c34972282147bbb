"""Marching-squares iso contours of depth rasters."""

import numpy as np
from skimage.measure import find_contours

from via_inspector.rasters import FloatArray, RasterModel


class IsoContour(RasterModel):
    """
    One connected iso line.

    Attributes
    ----------
    rows, cols : np.ndarray
        Fractional raster indices of the vertices, linearly interpolated along
        pixel edges.
    closed : bool
        True when the line loops back on itself; open lines end on the border.

    """

    rows: FloatArray
    cols: FloatArray
    closed: bool

    @property
    def length(self) -> float:
        """Polyline length in pixels."""
        return float(np.hypot(np.diff(self.rows), np.diff(self.cols)).sum())

    def vertices(self) -> tuple[np.ndarray, np.ndarray]:
        """Return the vertices without the repeated closing point."""
        if self.closed and self.rows.size > 1:
            return self.rows[:-1], self.cols[:-1]
        return self.rows, self.cols


def iso_contours(raster: np.ndarray, level: float) -> list[IsoContour]:
    """Trace every iso line of ``raster`` at ``level``."""
    contours = []
    for path in find_contours(np.asarray(raster, dtype=np.float64), level):
        closed = path.shape[0] > 3 and np.array_equal(path[0], path[-1])
        contours.append(IsoContour(rows=path[:, 0], cols=path[:, 1], closed=bool(closed)))
    return contours

"""Render the three-via synthetic suite and its ground truth into a directory."""

from pathlib import Path
import sys

from via_inspector.config import LightConfig
from via_inspector.formats import emit_summary, save_depth_map, save_pgm
from via_inspector.metrology import ViaMeasurement
from via_inspector.synthetic import (
    analytic_depth,
    default_scene_suite,
    nominal_diameter,
    render_scene,
    ring_lights,
)


def main() -> None:
    """
    Render every suite scene under the seven-light layout.

    Writes one sub-directory per scene with its frames, ``truth.fdm1`` and
    ``lights.json``, plus a ``reference.csv`` with the nominal depth and
    10 % depth diameter of each via.
    """
    out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "synthetic_suite")
    lights = ring_lights(6)
    references = []
    for index, scene in enumerate(default_scene_suite(), start=1):
        scene_dir = out_dir / scene.name
        scene_dir.mkdir(parents=True, exist_ok=True)
        stack = render_scene(scene, lights, seed=index)
        for frame_index, frame in enumerate(stack.frames):
            save_pgm(frame, scene_dir / f"frame_{frame_index:02d}.pgm")
        save_depth_map(analytic_depth(scene), scene_dir / "truth.fdm1")
        (scene_dir / "lights.json").write_text(LightConfig.from_light_set(lights).model_dump_json(indent=2))
        via = scene.vias[0]
        references.append(ViaMeasurement(depth=via.depth, diameter=nominal_diameter(via), via_id=scene.name))
    (out_dir / "reference.csv").write_bytes(emit_summary(references).encode())
    print(f"✅ Synthetic suite written to {out_dir}")


if __name__ == "__main__":
    main()

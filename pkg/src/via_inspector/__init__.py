"""Via inspector package: photometric stereo reconstruction and metrology of blind micro-vias."""

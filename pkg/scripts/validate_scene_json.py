"""Script to validate the shipped scene and light JSON files against their schemas."""

from pathlib import Path
import sys

from via_inspector.config import LightConfig, load_scene


SCENES_DIR = Path("src/via_inspector/scenes")


def main():
    """Validate every JSON file of the scenes directory and print the result."""
    failed = False
    for path in sorted(SCENES_DIR.glob("*.json")):
        try:
            if path.name.startswith("lights_"):
                LightConfig.from_json(path).to_light_set()
            else:
                load_scene(path)
            print(f"✅ {path} is valid.")
        except Exception as e:
            print(f"❌ Validation failed for {path}:\n{e}")
            failed = True
    if failed:
        sys.exit(1)


if __name__ == "__main__":
    main()

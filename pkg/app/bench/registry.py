"""
Scene Registry - discovers declarative scenes on disk

Scenes are JSON files under app/scenes_library/{core,experimental}/,
validated into SceneSpec on discovery. Dropping a new file into either
directory makes it available to every command by name.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List

from app.errors import ConfigError, UnknownScene
from app.models import SceneSpec

logger = logging.getLogger(__name__)

SCENES_DIR = Path(__file__).parent.parent / "scenes_library"
CATEGORIES = ["core", "experimental"]


class SceneRegistry:
    """Central lookup for named scenes"""

    def __init__(self, scenes_dir: Path = SCENES_DIR):
        self.scenes_dir = Path(scenes_dir)
        self._scenes: Dict[str, SceneSpec] = {}
        self._categories: Dict[str, str] = {}
        self._discover_scenes()

    def _discover_scenes(self):
        if not self.scenes_dir.exists():
            return

        for category in CATEGORIES:
            category_dir = self.scenes_dir / category
            if not category_dir.exists():
                continue

            for scene_file in sorted(category_dir.glob("*.json")):
                try:
                    scene = SceneSpec.from_file(scene_file)
                except ConfigError as e:
                    logger.warning("Failed to load scene from %s: %s", scene_file, e)
                    continue
                self._scenes[scene.name] = scene
                self._categories[scene.name] = category

    def get_scene(self, name: str) -> SceneSpec:
        """
        Look up a scene by name.

        Raises:
            UnknownScene: If scene not found
        """
        if name not in self._scenes:
            raise UnknownScene(f"Scene not found: {name}")
        return self._scenes[name]

    def register(self, scene: SceneSpec, category: str = "experimental"):
        self._scenes[scene.name] = scene
        self._categories[scene.name] = category

    def list_scenes(self) -> List[Dict[str, Any]]:
        return [
            {
                "name": name,
                "category": self._categories[name],
                "description": scene.description,
                "planes": len(scene.planes),
                "boxes": len(scene.boxes),
            }
            for name, scene in sorted(self._scenes.items())
        ]

    def scenes(self, category: str = None) -> Dict[str, SceneSpec]:
        return {
            name: scene
            for name, scene in sorted(self._scenes.items())
            if category is None or self._categories[name] == category
        }

    def reload(self):
        self._scenes.clear()
        self._categories.clear()
        self._discover_scenes()


# Global registry instance
_registry = None


def get_registry() -> SceneRegistry:
    """Get the global scene registry"""
    global _registry
    if _registry is None:
        _registry = SceneRegistry()
    return _registry


def builtin_scenes() -> Dict[str, SceneSpec]:
    """All discovered scenes by name (corner, desk, single_plane, room)"""
    return get_registry().scenes()


def get_scene(name: str) -> SceneSpec:
    return get_registry().get_scene(name)

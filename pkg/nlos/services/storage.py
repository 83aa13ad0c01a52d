"""
File-based artifact storage for EventNLOS outputs
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from core.config import settings
from core.exceptions import NotFoundError, StorageError
from core.logging_config import get_logger
from schemas.dataset import DatasetManifest
from schemas.training import TrainingResult

logger = get_logger("storage")


class ArtifactStorage:
    """Collection directories of JSON documents and binary blobs under one root"""

    def __init__(self, base_dir: Union[str, Path] = None):
        self.base_dir = Path(base_dir or settings.OUT_DIR)
        self.base_dir.mkdir(parents=True, exist_ok=True)

    def _get_collection_dir(self, collection: str) -> Path:
        """Get collection directory"""
        collection_dir = self.base_dir / collection if collection else self.base_dir
        collection_dir.mkdir(parents=True, exist_ok=True)
        return collection_dir

    def path(self, collection: str, name: str) -> Path:
        """Absolute path of an item"""
        return self._get_collection_dir(collection) / name

    def relative(self, path: Path) -> str:
        """POSIX path relative to the storage root, as stored in manifests"""
        return Path(path).relative_to(self.base_dir).as_posix()

    def _atomic_write(self, file_path: Path, payload: bytes) -> None:
        # Write to temporary file first, then rename (atomic operation)
        temp_path = file_path.with_name(file_path.name + ".tmp")
        with open(temp_path, "wb") as f:
            f.write(payload)
        os.replace(str(temp_path), str(file_path))

    def save_json(self, collection: str, name: str, data: Dict[str, Any]) -> Path:
        """Save a JSON document (sorted keys, no timestamps: byte reproducible)"""
        file_path = self.path(collection, name)
        try:
            payload = json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False, default=str) + "\n"
            self._atomic_write(file_path, payload.encode("utf-8"))
            logger.debug(f"Saved {collection}/{name}")
            return file_path
        except Exception as e:
            logger.error(f"Failed to save {collection}/{name}: {e}")
            raise StorageError("save", f"Failed to save {collection}/{name}: {str(e)}")

    def load_json(self, collection: str, name: str) -> Dict[str, Any]:
        """Load a JSON document"""
        file_path = self.base_dir / collection / name if collection else self.base_dir / name
        if not file_path.exists():
            raise NotFoundError("artifact", f"{collection}/{name}" if collection else name)
        try:
            with open(file_path, "r", encoding="utf-8") as f:
                data = json.load(f)
            logger.debug(f"Loaded {collection}/{name}")
            return data
        except Exception as e:
            logger.error(f"Failed to load {collection}/{name}: {e}")
            raise StorageError("load", f"Failed to load {collection}/{name}: {str(e)}")

    def save_bytes(self, collection: str, name: str, payload: bytes) -> Path:
        file_path = self.path(collection, name)
        try:
            self._atomic_write(file_path, payload)
            logger.debug(f"Saved {collection}/{name} ({len(payload)} bytes)")
            return file_path
        except Exception as e:
            logger.error(f"Failed to save {collection}/{name}: {e}")
            raise StorageError("save", f"Failed to save {collection}/{name}: {str(e)}")

    def load_bytes(self, collection: str, name: str) -> bytes:
        file_path = self.base_dir / collection / name if collection else self.base_dir / name
        if not file_path.exists():
            raise NotFoundError("artifact", f"{collection}/{name}" if collection else name)
        try:
            return file_path.read_bytes()
        except Exception as e:
            raise StorageError("load", f"Failed to load {collection}/{name}: {str(e)}")

    def save_text(self, collection: str, name: str, text: str) -> Path:
        return self.save_bytes(collection, name, text.encode("utf-8"))

    def exists(self, collection: str, name: str) -> bool:
        """Check if item exists"""
        return (self.base_dir / collection / name).exists()

    def list_items(self, collection: str, pattern: str = "*.json") -> List[str]:
        """Names in a collection, sorted by name"""
        collection_dir = self.base_dir / collection
        if not collection_dir.is_dir():
            return []
        return sorted(p.name for p in collection_dir.glob(pattern))


class ManifestStorage:
    """Dataset manifest operations"""

    FILENAME = "manifest.json"

    def __init__(self, storage: ArtifactStorage):
        self.storage = storage

    def save_manifest(self, manifest: DatasetManifest) -> Path:
        return self.storage.save_json("", self.FILENAME, manifest.model_dump(mode="json"))

    def load_manifest(self) -> DatasetManifest:
        return DatasetManifest.model_validate(self.storage.load_json("", self.FILENAME))


class ModelStorage:
    """Trained model (NLRW blob + JSON sidecar) operations"""

    def __init__(self, storage: ArtifactStorage, collection: str = "models"):
        self.storage = storage
        self.collection = collection

    def save_model(self, name: str, blob: bytes, result: Optional[TrainingResult] = None) -> Path:
        if result is not None:
            self.storage.save_json(self.collection, f"{name}.json", result.model_dump(mode="json"))
        return self.storage.save_bytes(self.collection, f"{name}.nlrw", blob)

    def load_result(self, name: str) -> Optional[TrainingResult]:
        if not self.storage.exists(self.collection, f"{name}.json"):
            return None
        return TrainingResult.model_validate(self.storage.load_json(self.collection, f"{name}.json"))

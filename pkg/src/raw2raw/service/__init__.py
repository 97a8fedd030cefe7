from .app import DATA_ROOT_ENV, create_app
from .store import DatasetStore, FitResult, ImageRef, PairEntry, record_hash

__all__ = ["DATA_ROOT_ENV", "create_app", "DatasetStore", "FitResult",
           "ImageRef", "PairEntry", "record_hash"]

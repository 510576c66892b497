"""Model and dataset ingestion: PMML subset, native JSON, CSV."""

from .native import FORMAT_VERSION, NativeModelDocument, parse_native, serialize_native
from .pmml import parse_pmml, serialize_pmml
from .tabular import Dataset, dump_csv, load_csv

__all__ = [
    "FORMAT_VERSION",
    "Dataset",
    "NativeModelDocument",
    "dump_csv",
    "load_csv",
    "parse_native",
    "parse_pmml",
    "serialize_native",
    "serialize_pmml",
]

"""minilake: an embeddable single-node data lakehouse.

Tables live as immutable columnar files plus snapshot metadata in a
write-once object store; a git-like catalog of content-addressed commits
makes every change atomic, versioned, branchable, and mergeable.
"""

from .config import Config, load_config
from .errors import MinilakeError
from .lakehouse import Lakehouse
from .model import ColumnStats, DataFile, Field, Schema
from .partitioning import PartitionField, PartitionSpec, Transform
from .predicate import Predicate, parse_predicate
from .table import (
    AddColumn,
    DropColumn,
    RenameColumn,
    Snapshot,
    TableMetadata,
)
from .transaction import Transaction

__version__ = "0.1.0"

__all__ = [
    "AddColumn",
    "ColumnStats",
    "Config",
    "DataFile",
    "DropColumn",
    "Field",
    "Lakehouse",
    "MinilakeError",
    "PartitionField",
    "PartitionSpec",
    "Predicate",
    "RenameColumn",
    "Schema",
    "Snapshot",
    "TableMetadata",
    "Transaction",
    "Transform",
    "load_config",
    "parse_predicate",
    "__version__",
]

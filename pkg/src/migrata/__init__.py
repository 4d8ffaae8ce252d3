"""Metamodel-driven model migration: conservative copy plus declarative rules."""

from .diff import DiffReport, diff, equivalent
from .engine import (
    DROP,
    MigrationContext,
    MigrationPlan,
    MigratorRegistry,
    Rule,
    Trace,
    VersionId,
    chain_migrate,
    detect_version,
    migrate,
)
from .instance import (
    ExternalRef,
    ModelObject,
    Resource,
    ResourceSet,
    add,
    check_conformance,
    get,
    instantiate,
    set_value,
)
from .metamodel import Metamodel, effective_features, find_class, is_subtype, load_metamodel
from .xmi import object_fragment, read_resource_set, resolve_uri, write_resource_set

__version__ = "0.1.0"

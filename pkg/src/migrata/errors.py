"""Exception hierarchy shared by all migrata modules."""

from __future__ import annotations


class MigrataError(Exception):
    """Base class for every error raised by the toolkit."""


# metamodel loading

class ParseError(MigrataError):
    pass


class UnresolvedType(MigrataError):
    pass


class DuplicateName(MigrataError):
    pass


# instances

class UnknownClass(MigrataError):
    pass


class AbstractInstantiation(MigrataError):
    pass


class UnknownFeature(MigrataError):
    pass


class TypeMismatch(MigrataError):
    pass


class MultiplicityViolation(MigrataError):
    pass


class OwnershipCycle(MigrataError):
    pass


# xmi reading/writing

class UnknownNamespace(MigrataError):
    pass


class MixedVersions(MigrataError):
    pass


class UnresolvedReference(MigrataError):
    pass


class FeatureMismatch(MigrataError):
    pass


class DanglingReference(MigrataError):
    pass


# migration

class MigrationError(MigrataError):
    pass


class MissingTargetClass(MigrationError):
    pass


class MissingTargetFeature(MigrationError):
    pass


class MissingEnumLiteral(MigrationError):
    pass


class RuleError(MigrationError):
    pass


class PostConformance(MigrationError):
    def __init__(self, violations):
        self.violations = list(violations)
        lines = "\n".join(f"  {v}" for v in self.violations[:20])
        more = len(self.violations) - 20
        if more > 0:
            lines += f"\n  ... and {more} more"
        super().__init__(f"migrated model does not conform to target metamodel:\n{lines}")


class PlanConstructionError(MigrationError):
    pass


class RegistryError(MigrataError):
    pass

"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class TreeContribError(Exception):
    """Base class for every error raised by treecontrib.

    ``row`` is set when the error was raised while processing one row of a
    batch, so callers can report which input triggered it.
    """

    row: int | None = None


class ModelInvariantError(TreeContribError):
    """The model violates a structural invariant (or routing is ambiguous)."""


class MissingValueError(TreeContribError):
    """A MISSING value reached a split while the missing policy is ERROR."""


class ParseError(TreeContribError):
    """Input text could not be parsed (XML, JSON or CSV)."""


class UnsupportedFeatureError(ParseError):
    """Valid PMML that falls outside the supported TreeModel subset."""


class CatalogMismatchError(TreeContribError):
    """Dataset features do not match the model's feature catalog."""


class VariantUnavailableError(TreeContribError):
    """The requested annotation variant was not computed for this model."""


class DegenerateLabelsError(TreeContribError):
    """Labels lack one of the two classes required by the computation."""


def with_row(err: TreeContribError, row: int) -> TreeContribError:
    """Return a copy of ``err`` whose message and ``row`` name the batch row."""
    new = type(err)(f"row {row}: {err}")
    new.row = row
    return new

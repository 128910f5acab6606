"""Fixture shapes shared across test modules."""

from gtgd.model import CQ, Atom, Const, Instance, TGD, Schema, Var


def A(pred, *names):
    """Atom over variables."""
    return Atom(pred, tuple(Var(n) for n in names))


def G(pred, *names):
    """Ground atom over constants."""
    return Atom(pred, tuple(Const(n) for n in names))


def square_query():
    """Boolean CQ: a 4-cycle of binary atoms, one unary mark per variable.

    The query is a core and its treewidth is 2.
    """

    return CQ(
        (),
        [
            A("P", "x2", "x1"),
            A("P", "x4", "x1"),
            A("P", "x2", "x3"),
            A("P", "x4", "x3"),
            A("R1", "x1"),
            A("R2", "x2"),
            A("R3", "x3"),
            A("R4", "x4"),
        ],
    )


def vee_query():
    """The square folded onto one spout; treewidth 1."""

    return CQ(
        (),
        [
            A("P", "x2", "x1"),
            A("P", "x2", "x3"),
            A("R1", "x1"),
            A("R2", "x2"),
            A("R3", "x3"),
        ],
    )


def vee_db():
    """Canonical-looking database the vee query matches directly."""

    return Instance(
        [G("R1", "a"), G("R2", "b"), G("R3", "c"), G("P", "b", "a"), G("P", "b", "c")]
    )


def mark_rule():
    """R2(x) -> R4(x), the one-rule full set used all over these tests."""

    return TGD([A("R2", "x")], [A("R4", "x")])


def square_schema():
    return Schema({"R1": 1, "R2": 1, "R3": 1, "R4": 1, "P": 2})

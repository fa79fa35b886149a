"""Explicit hash families and derandomized balanced-allocation experiments."""

from .gf2x import FieldCtx, field, gf_add, gf_mul, gf_pow, poly_eval

__all__ = [
    "FieldCtx",
    "field",
    "gf_add",
    "gf_mul",
    "gf_pow",
    "poly_eval",
]

__version__ = "0.1.0"

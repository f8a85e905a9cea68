"""jetcons: symmetry-invariant conservation-law multipliers, conserved
currents, and first integrals of symmetry-reduced ODEs."""

from .expr import (
    Coef, DomainError, ExpLin, Expr, ExprError, NonAffineExponent, Poly,
    eval_numeric, exp, ln, normalize,
)
from .parser import ParseError, SymbolTable, parse_expr

__all__ = [
    "Coef", "DomainError", "ExpLin", "Expr", "ExprError",
    "NonAffineExponent", "ParseError", "Poly", "SymbolTable",
    "eval_numeric", "exp", "ln", "normalize", "parse_expr",
]

__version__ = "0.1.0"

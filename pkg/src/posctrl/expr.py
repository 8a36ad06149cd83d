"""Arithmetic expression language for user-defined vector fields.

The language covers real constants, state variables ``x1 .. xn``, named
parameters, the binary operators ``+ - * / ^`` and unary minus, and the
functions ``exp`` and ``ln``.  Precedence from loosest to tightest is
``+ -``, ``* /``, unary minus, ``^``; ``^`` associates to the right, so
``2^3^2`` is ``2^(3^2)`` and ``-x^2`` is ``-(x^2)``.

Parsed expressions are immutable ASTs supporting IEEE-double evaluation,
exact symbolic partial differentiation, and serialization back to text.
A line-oriented model-file format (see :func:`parse_model_file`) builds a
full :class:`~posctrl.model.SystemModel` out of expressions.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import EvaluationError, ExpressionSyntaxError, ModelFileError
from .model import SystemModel


# ---------------------------------------------------------------------------
# AST node types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    """State variable by 1-based index (``x3`` -> ``Var(3)``)."""

    index: int


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str  # exp | ln
    arg: "Expr"


Expr = Union[Const, Var, Param, Neg, Bin, Call]

_FUNCTIONS = ("exp", "ln")

_ZERO = Const(0.0)
_ONE = Const(1.0)


# ---------------------------------------------------------------------------
# Tokenizer / parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),\[\]]))"
)

_VAR_RE = re.compile(r"^x(\d+)$")


class _Parser:
    """Recursive-descent parser over a flat token list with source offsets."""

    def __init__(self, text: str):
        self.text = text
        self.tokens = []  # (kind, value, offset)
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None or m.end() == pos:
                # skip whitespace-only tail
                if text[pos:].strip() == "":
                    break
                raise ExpressionSyntaxError(
                    f"unexpected character {text[pos:].strip()[0]!r}", pos
                )
            if m.group("num") is not None:
                self.tokens.append(("num", m.group("num"), m.start("num")))
            elif m.group("ident") is not None:
                self.tokens.append(("ident", m.group("ident"), m.start("ident")))
            else:
                self.tokens.append(("op", m.group("op"), m.start("op")))
            pos = m.end()
        self.i = 0

    def peek(self):
        if self.i < len(self.tokens):
            return self.tokens[self.i]
        return ("end", "", len(self.text))

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, value, offset = self.next()
        if kind != "op" or value != op:
            raise ExpressionSyntaxError(f"expected {op!r}, found {value or 'end of input'!r}", offset)

    # grammar: sum -> term (('+'|'-') term)*
    def parse_sum(self) -> Expr:
        node = self.parse_term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.next()
                rhs = self.parse_term()
                node = Bin(value, node, rhs)
            else:
                return node

    # term -> unary (('*'|'/') unary)*
    def parse_term(self) -> Expr:
        node = self.parse_unary()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.next()
                rhs = self.parse_unary()
                node = Bin(value, node, rhs)
            else:
                return node

    # unary -> '-' unary | power
    def parse_unary(self) -> Expr:
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.next()
            return Neg(self.parse_unary())
        return self.parse_power()

    # power -> atom ('^' unary)?    (right-associative, binds tighter than unary -)
    def parse_power(self) -> Expr:
        base = self.parse_atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.next()
            return Bin("^", base, self.parse_unary())
        return base

    def parse_atom(self) -> Expr:
        kind, value, offset = self.next()
        if kind == "num":
            return Const(float(value))
        if kind == "ident":
            nxt_kind, nxt_value, _ = self.peek()
            if nxt_kind == "op" and nxt_value == "(":
                if value not in _FUNCTIONS:
                    raise ExpressionSyntaxError(f"unknown function {value!r}", offset)
                self.next()
                arg = self.parse_sum()
                self.expect_op(")")
                return Call(value, arg)
            m = _VAR_RE.match(value)
            if m:
                index = int(m.group(1))
                if index == 0:
                    raise ExpressionSyntaxError("state variables are numbered from x1", offset)
                return Var(index)
            return Param(value)
        if kind == "op" and value == "(":
            node = self.parse_sum()
            self.expect_op(")")
            return node
        raise ExpressionSyntaxError(
            f"expected a number, name or '(', found {value or 'end of input'!r}", offset
        )


def parse_expression(text: str) -> Expr:
    """Parse ``text`` into an expression AST.

    Raises :class:`ExpressionSyntaxError` (with the byte offset of the problem)
    on malformed input.
    """
    parser = _Parser(text)
    node = parser.parse_sum()
    kind, value, offset = parser.peek()
    if kind != "end":
        raise ExpressionSyntaxError(f"unexpected trailing input {value!r}", offset)
    return node


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _ipow(base: float, n: int) -> float:
    """Integer power by binary exponentiation (``0^0 == 1`` by convention)."""
    if n < 0:
        if base == 0.0:
            raise EvaluationError("zero raised to a negative power")
        return 1.0 / _ipow(base, -n)
    result = 1.0
    while n:
        if n & 1:
            result *= base
        base *= base
        n >>= 1
    return result


def _power(base: float, exponent: float) -> float:
    if exponent == math.floor(exponent) and abs(exponent) <= 2**31:
        return _ipow(base, int(exponent))
    if base <= 0.0:
        raise EvaluationError(
            f"non-integer power of a non-positive base ({base!r} ^ {exponent!r})"
        )
    return math.exp(exponent * math.log(base))


def evaluate(e: Expr, x, params: Mapping[str, float]) -> float:
    """Evaluate ``e`` at state ``x`` with the given parameter bindings.

    Division by zero and ``ln`` of a non-positive argument raise
    :class:`EvaluationError` instead of producing NaN/inf silently.
    """
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        if not 1 <= e.index <= len(x):
            raise EvaluationError(f"state variable x{e.index} out of range for n={len(x)}")
        return float(x[e.index - 1])
    if isinstance(e, Param):
        try:
            return float(params[e.name])
        except KeyError:
            raise EvaluationError(f"unbound parameter {e.name!r}") from None
    if isinstance(e, Neg):
        return -evaluate(e.arg, x, params)
    if isinstance(e, Bin):
        a = evaluate(e.left, x, params)
        b = evaluate(e.right, x, params)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if b == 0.0:
                raise EvaluationError("division by zero")
            return a / b
        return _power(a, b)
    # Call
    a = evaluate(e.arg, x, params)
    if e.func == "exp":
        return math.exp(a)
    if a <= 0.0:
        raise EvaluationError(f"ln of non-positive value {a!r}")
    return math.log(a)


# ---------------------------------------------------------------------------
# Symbolic differentiation with light simplification
# ---------------------------------------------------------------------------

def _is_const(e: Expr, value: float) -> bool:
    return isinstance(e, Const) and e.value == value


def _const(value: float) -> Expr:
    # canonical ASTs keep Const nonnegative so serialization round-trips
    if value < 0:
        return Neg(Const(-value))
    return Const(value)


def _add(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return _const(a.value + b.value)
    return Bin("+", a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return _neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return _const(a.value - b.value)
    return Bin("-", a, b)


def _mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return _ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return _const(a.value * b.value)
    return Bin("*", a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return _ZERO
    if _is_const(b, 1.0):
        return a
    return Bin("/", a, b)


def _neg(a: Expr) -> Expr:
    if isinstance(a, Neg):
        return a.arg
    if _is_const(a, 0.0):
        return _ZERO
    return Neg(a)


def _pow(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 1.0):
        return a
    if _is_const(b, 0.0):
        return _ONE
    return Bin("^", a, b)


def differentiate(e: Expr, i: int) -> Expr:
    """Exact symbolic partial derivative of ``e`` with respect to ``x_i`` (1-based)."""
    if i < 1:
        raise ValueError("variable index is 1-based")
    if isinstance(e, (Const, Param)):
        return _ZERO
    if isinstance(e, Var):
        return _ONE if e.index == i else _ZERO
    if isinstance(e, Neg):
        return _neg(differentiate(e.arg, i))
    if isinstance(e, Bin):
        da = differentiate(e.left, i)
        db = differentiate(e.right, i)
        if e.op == "+":
            return _add(da, db)
        if e.op == "-":
            return _sub(da, db)
        if e.op == "*":
            return _add(_mul(da, e.right), _mul(e.left, db))
        if e.op == "/":
            num = _sub(_mul(da, e.right), _mul(e.left, db))
            return _div(num, _pow(e.right, Const(2.0)))
        # power rule when the exponent does not involve x_i; this keeps
        # integer powers differentiable at base 0, where the logarithmic
        # form below would fail
        if _is_const(db, 0.0):
            factor = _mul(e.right, _pow(e.left, _sub(e.right, _ONE)))
            return _mul(factor, da)
        log_part = _add(_mul(db, Call("ln", e.left)), _div(_mul(e.right, da), e.left))
        return _mul(Bin("^", e.left, e.right), log_part)
    # Call
    da = differentiate(e.arg, i)
    if e.func == "exp":
        return _mul(Call("exp", e.arg), da)
    return _div(da, e.arg)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_PREC_SUM = 1
_PREC_TERM = 2
_PREC_NEG = 3
_PREC_POW = 4
_PREC_ATOM = 5


def _prec(e: Expr) -> int:
    if isinstance(e, Bin):
        if e.op in "+-":
            return _PREC_SUM
        if e.op in "*/":
            return _PREC_TERM
        return _PREC_POW
    if isinstance(e, Neg):
        return _PREC_NEG
    if isinstance(e, Const) and e.value < 0:
        return _PREC_NEG  # prints with a leading '-', parenthesize like a negation
    return _PREC_ATOM


def _emit(e: Expr, min_prec: int) -> str:
    if isinstance(e, Const):
        s = repr(e.value)
        s = s[:-2] if s.endswith(".0") else s
    elif isinstance(e, Var):
        s = f"x{e.index}"
    elif isinstance(e, Param):
        s = e.name
    elif isinstance(e, Neg):
        s = "-" + _emit(e.arg, _PREC_NEG)
    elif isinstance(e, Call):
        s = f"{e.func}({_emit(e.arg, 0)})"
    else:
        if e.op in "+-":
            s = _emit(e.left, _PREC_SUM) + e.op + _emit(e.right, _PREC_SUM + 1)
        elif e.op in "*/":
            s = _emit(e.left, _PREC_TERM) + e.op + _emit(e.right, _PREC_TERM + 1)
        else:
            # '^' is right-associative and its right operand may be a unary minus
            s = _emit(e.left, _PREC_POW + 1) + e.op + _emit(e.right, _PREC_NEG)
    if _prec(e) < min_prec:
        return "(" + s + ")"
    return s


def serialize(e: Expr) -> str:
    """Render ``e`` as text that parses back to a structurally identical AST.

    Exact structural round-trip assumes the canonical form produced by the
    parser and by :func:`differentiate` (constants are nonnegative, with unary
    minus as an explicit node); other ASTs still round-trip by value.
    """
    return _emit(e, 0)


# ---------------------------------------------------------------------------
# Model-level helpers
# ---------------------------------------------------------------------------

def max_var_index(e: Expr) -> int:
    if isinstance(e, Var):
        return e.index
    if isinstance(e, Neg):
        return max_var_index(e.arg)
    if isinstance(e, Call):
        return max_var_index(e.arg)
    if isinstance(e, Bin):
        return max(max_var_index(e.left), max_var_index(e.right))
    return 0


def param_names(e: Expr) -> set:
    if isinstance(e, Param):
        return {e.name}
    if isinstance(e, Neg):
        return param_names(e.arg)
    if isinstance(e, Call):
        return param_names(e.arg)
    if isinstance(e, Bin):
        return param_names(e.left) | param_names(e.right)
    return set()


def jacobian(m: SystemModel, x) -> np.ndarray:
    """Jacobian of ``m``'s drift field ``f`` at ``x``.

    Expression-backed models differentiate symbolically; builtin models carry
    hand-written Jacobians; anything else falls back to central finite
    differences (step ``1e-6 * max(1, |x_j|)`` per column).
    """
    return m.jacobian(x)


def fd_jacobian(f, x, rel_step: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian of a vector field, used as an oracle."""
    x = np.asarray(x, dtype=float)
    fx = np.asarray(f(x), dtype=float)
    J = np.empty((fx.size, x.size))
    for j in range(x.size):
        h = rel_step * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        J[:, j] = (np.asarray(f(xp), dtype=float) - np.asarray(f(xm), dtype=float)) / (2 * h)
    return J


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

_MODEL_FILE_DOC = """\
Model-file format (UTF-8, line oriented, '#' starts a comment):

    system <name>
    dim <n>
    param <ident> = <constant expression>     # repeatable; may use earlier params
    f1 = <expression>                          # one line per component, f1..fn
    ...
    c = [<expr>, <expr>, ...]                  # n entries, constant after params
    psi = <expression>
"""


def _fold_constant(e: Expr, params: Mapping[str, float], what: str) -> float:
    if max_var_index(e) != 0:
        raise ModelFileError(f"{what} must not reference state variables")
    try:
        return evaluate(e, (), params)
    except EvaluationError as err:
        raise ModelFileError(f"{what}: {err}") from None


def parse_model_file(text: str) -> SystemModel:
    """Build an expression-backed :class:`SystemModel` from model-file text.

    See the grammar in the module docs; ``c`` entries are folded to constants
    once the parameter bindings are known.
    """
    name = None
    dim = None
    params: dict[str, float] = {}
    f_exprs: dict[int, Expr] = {}
    c_values = None
    psi_expr = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        try:
            if head == "system":
                name = rest.strip()
                if not name:
                    raise ModelFileError("system directive needs a name")
            elif head == "dim":
                dim = int(rest.strip())
                if dim < 1:
                    raise ModelFileError("dim must be a positive integer")
            elif head == "param":
                ident, eq, value_text = rest.partition("=")
                ident = ident.strip()
                if not eq or not ident:
                    raise ModelFileError("param syntax is: param <ident> = <value>")
                value = _fold_constant(parse_expression(value_text), params, f"param {ident}")
                params[ident] = value
            elif re.fullmatch(r"f\d+", head):
                index = int(head[1:])
                _, eq, expr_text = line.partition("=")
                if not eq:
                    raise ModelFileError(f"{head} line needs '='")
                f_exprs[index] = parse_expression(expr_text)
            elif head in ("c", "c="):
                _, eq, expr_text = line.partition("=")
                if not eq:
                    raise ModelFileError("c line needs '='")
                expr_text = expr_text.strip()
                if not (expr_text.startswith("[") and expr_text.endswith("]")):
                    raise ModelFileError("c must be a bracketed list: c = [..., ...]")
                entries = expr_text[1:-1].split(",")
                c_values = [
                    _fold_constant(parse_expression(entry), params, "c entry")
                    for entry in entries
                ]
            elif head in ("psi", "psi="):
                _, eq, expr_text = line.partition("=")
                if not eq:
                    raise ModelFileError("psi line needs '='")
                psi_expr = parse_expression(expr_text)
            else:
                raise ModelFileError(f"unknown directive {head!r}")
        except ExpressionSyntaxError as err:
            raise ModelFileError(f"line {lineno}: {err}") from None
        except ModelFileError as err:
            raise ModelFileError(f"line {lineno}: {err}") from None

    if name is None:
        raise ModelFileError("missing 'system' directive")
    if dim is None:
        raise ModelFileError("missing 'dim' directive")
    if psi_expr is None:
        raise ModelFileError("missing 'psi' line")
    if c_values is None:
        raise ModelFileError("missing 'c' line")

    if sorted(f_exprs) != list(range(1, dim + 1)):
        raise ModelFileError(
            f"dimension mismatch: dim {dim} but f-components {sorted(f_exprs)}"
        )
    if len(c_values) != dim:
        raise ModelFileError(f"dimension mismatch: dim {dim} but {len(c_values)} c entries")

    f_list = [f_exprs[i] for i in range(1, dim + 1)]
    for e in f_list + [psi_expr]:
        top = max_var_index(e)
        if top > dim:
            raise ModelFileError(f"expression references x{top} but dim is {dim}")
        unbound = param_names(e) - set(params)
        if unbound:
            raise ModelFileError(f"unbound parameter {sorted(unbound)[0]!r}")

    return model_from_expressions(name, dim, f_list, np.array(c_values, dtype=float),
                                  psi_expr, params)


def model_from_expressions(name, n, f_exprs, c, psi_expr, params) -> SystemModel:
    """Assemble a SystemModel whose evaluators walk expression ASTs."""
    f_exprs = tuple(f_exprs)
    params = dict(params)
    jac_exprs = tuple(tuple(differentiate(fi, j + 1) for j in range(n)) for fi in f_exprs)
    grad_exprs = tuple(differentiate(psi_expr, j + 1) for j in range(n))

    def f(x):
        return np.array([evaluate(fi, x, params) for fi in f_exprs])

    def jac_f(x):
        return np.array([[evaluate(d, x, params) for d in row] for row in jac_exprs])

    def psi(x):
        return evaluate(psi_expr, x, params)

    def grad_psi(x):
        return np.array([evaluate(d, x, params) for d in grad_exprs])

    return SystemModel(
        name=name,
        n=n,
        c=np.asarray(c, dtype=float),
        params=params,
        f=f,
        jac_f=jac_f,
        psi=psi,
        grad_psi=grad_psi,
        f_exprs=f_exprs,
        psi_expr=psi_expr,
    )

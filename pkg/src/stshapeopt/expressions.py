"""Small analytic expression grammar for run configurations.

Supports numbers, named variables, `pi`, the operators + - * / ** (also ^),
unary minus, parentheses and the functions sqrt, sin, cos.  Exponents must
be numeric constants.  Expressions evaluate over numpy arrays and carry
exact symbolic derivatives with respect to their variables.
"""

import re

import numpy as np

FUNCTIONS = ("sqrt", "sin", "cos")

_TOKEN = re.compile(r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
                    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
                    r"|(?P<op>\*\*|[-+*/^()]))")


class ExpressionError(ValueError):
    pass


def _tokenize(text):
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise ExpressionError(
                f"unexpected character {text[pos]!r} at position {pos}")
        if m.group("num") is not None:
            tokens.append(("num", float(m.group("num"))))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name")))
        else:
            op = m.group("op")
            tokens.append(("op", "**" if op == "^" else op))
        pos = m.end()
    tokens.append(("end", None))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.k = 0

    def peek(self):
        return self.tokens[self.k]

    def take(self, kind=None, value=None):
        tok = self.tokens[self.k]
        if kind is not None and tok[0] != kind:
            raise ExpressionError(f"expected {kind}, found {tok[1]!r}")
        if value is not None and tok[1] != value:
            raise ExpressionError(f"expected {value!r}, found {tok[1]!r}")
        self.k += 1
        return tok

    def expr(self):
        node = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            op = self.take()[1]
            rhs = self.term()
            node = _add(node, rhs) if op == "+" else _sub(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            op = self.take()[1]
            rhs = self.unary()
            node = _mul(node, rhs) if op == "*" else ("div", node, rhs)
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            return _sub(("num", 0.0), self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "**"):
            self.take()
            exponent = self.unary()
            exponent = _fold_constant(exponent)
            if exponent[0] != "num":
                raise ExpressionError("exponent must be a numeric constant")
            return ("pow", base, exponent[1])
        return base

    def atom(self):
        kind, value = self.peek()
        if kind == "num":
            self.take()
            return ("num", value)
        if kind == "name":
            self.take()
            if value in FUNCTIONS:
                self.take("op", "(")
                arg = self.expr()
                self.take("op", ")")
                return ("call", value, arg)
            if value == "pi":
                return ("num", np.pi)
            return ("var", value)
        if (kind, value) == ("op", "("):
            self.take()
            node = self.expr()
            self.take("op", ")")
            return node
        raise ExpressionError(f"unexpected token {value!r}")


def _fold_constant(node):
    if node[0] in ("num", "var"):
        return node
    if node[0] == "call":
        return node
    if node[0] == "pow":
        base = _fold_constant(node[1])
        if base[0] == "num":
            return ("num", base[1] ** node[2])
        return node
    a = _fold_constant(node[1])
    b = _fold_constant(node[2])
    if a[0] == "num" and b[0] == "num":
        ops = {"add": lambda x, y: x + y, "sub": lambda x, y: x - y,
               "mul": lambda x, y: x * y, "div": lambda x, y: x / y}
        return ("num", ops[node[0]](a[1], b[1]))
    return (node[0], a, b)


def _is_zero(node):
    return node[0] == "num" and node[1] == 0.0


def _is_one(node):
    return node[0] == "num" and node[1] == 1.0


def _add(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return ("add", a, b)


def _sub(a, b):
    if _is_zero(b):
        return a
    return ("sub", a, b)


def _mul(a, b):
    if _is_zero(a) or _is_zero(b):
        return ("num", 0.0)
    if _is_one(a):
        return b
    if _is_one(b):
        return a
    return ("mul", a, b)


def _evaluate(node, env):
    kind = node[0]
    if kind == "num":
        return node[1]
    if kind == "var":
        return env[node[1]]
    if kind == "add":
        return _evaluate(node[1], env) + _evaluate(node[2], env)
    if kind == "sub":
        return _evaluate(node[1], env) - _evaluate(node[2], env)
    if kind == "mul":
        return _evaluate(node[1], env) * _evaluate(node[2], env)
    if kind == "div":
        return _evaluate(node[1], env) / _evaluate(node[2], env)
    if kind == "pow":
        return _evaluate(node[1], env) ** node[2]
    fn = {"sqrt": np.sqrt, "sin": np.sin, "cos": np.cos}[node[1]]
    return fn(_evaluate(node[2], env))


def _derivative(node, var):
    kind = node[0]
    if kind == "num":
        return ("num", 0.0)
    if kind == "var":
        return ("num", 1.0) if node[1] == var else ("num", 0.0)
    if kind == "add":
        return _add(_derivative(node[1], var), _derivative(node[2], var))
    if kind == "sub":
        return _sub(_derivative(node[1], var), _derivative(node[2], var))
    if kind == "mul":
        return _add(_mul(_derivative(node[1], var), node[2]),
                    _mul(node[1], _derivative(node[2], var)))
    if kind == "div":
        num = _sub(_mul(_derivative(node[1], var), node[2]),
                   _mul(node[1], _derivative(node[2], var)))
        return ("div", num, ("pow", node[2], 2.0))
    if kind == "pow":
        inner = _derivative(node[1], var)
        return _mul(_mul(("num", node[2]), ("pow", node[1], node[2] - 1.0)),
                    inner)
    fn, arg = node[1], node[2]
    inner = _derivative(arg, var)
    if fn == "sqrt":
        outer = ("div", ("num", 0.5), ("call", "sqrt", arg))
    elif fn == "sin":
        outer = ("call", "cos", arg)
    else:
        outer = _sub(("num", 0.0), ("call", "sin", arg))
    return _mul(outer, inner)


def _names(node, out):
    if node[0] == "var":
        out.add(node[1])
    elif node[0] in ("add", "sub", "mul", "div"):
        _names(node[1], out)
        _names(node[2], out)
    elif node[0] == "pow":
        _names(node[1], out)
    elif node[0] == "call":
        _names(node[2], out)


class Expression:
    """Parsed analytic expression over a fixed set of variable names."""

    def __init__(self, text, variables, _node=None):
        self.text = text
        self.variables = tuple(variables)
        if _node is not None:
            self.node = _node
        else:
            self.node = _Parser(_tokenize(text)).expr()
        used = set()
        _names(self.node, used)
        unknown = used - set(self.variables)
        if unknown:
            raise ExpressionError(
                f"unknown variable(s) {sorted(unknown)} in {text!r}; "
                f"allowed: {list(self.variables)}")

    def __call__(self, **env):
        missing = set(self.variables) - set(env)
        if missing:
            raise ExpressionError(f"missing variable(s) {sorted(missing)}")
        return _evaluate(self.node, env)

    def derivative(self, var):
        if var not in self.variables:
            raise ExpressionError(f"cannot differentiate with respect to "
                                  f"unknown variable {var!r}")
        return Expression(f"d({self.text})/d{var}", self.variables,
                          _node=_derivative(self.node, var))

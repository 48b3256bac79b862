"""Seeded generator of well-typed, terminating mini-ML programs.

Programs are correct by construction: every expression is generated
against a goal type, array indices are literals below the fixed array
length, and the only recursion is the bounded fill loop inside the
shared polymorphic library. Each program prints at least one value, so
differential runs compare real output.
"""

from __future__ import annotations

import random

ARRAY_LEN = 4

POLYLIB = """let pget a i = a.(i)
let pset a i v = a.(i) <- v
let pswap a i j = let t = a.(i) in (a.(i) <- a.(j); a.(j) <- t)
let plast a = a.(Array.length a - 1)
let pfill a v =
  let rec go i = if i < Array.length a then (a.(i) <- v; go (i + 1)) else () in
  go 0
let pid x = x
"""


class ProgramGen:
    def __init__(self, seed: int):
        self.rng = random.Random(seed)
        self.vars: dict[str, list[str]] = {"int": [], "float": [], "bool": [], "iarr": [], "farr": []}
        self.counter = 0

    def fresh(self, base: str) -> str:
        self.counter += 1
        return f"{base}{self.counter}"

    def pick_var(self, ty: str) -> str | None:
        pool = self.vars[ty]
        return self.rng.choice(pool) if pool else None

    def idx(self) -> str:
        return str(self.rng.randrange(ARRAY_LEN))

    # -- expression generators, one per goal type

    def int_expr(self, depth: int) -> str:
        r = self.rng
        if depth <= 0:
            v = self.pick_var("int")
            if v is not None and r.random() < 0.6:
                return v
            return str(r.randrange(0, 20))
        choice = r.randrange(8)
        if choice == 0:
            return f"({self.int_expr(depth - 1)} {r.choice(['+', '-', '*'])} {self.int_expr(depth - 1)})"
        if choice == 1:
            return f"(if {self.bool_expr(depth - 1)} then {self.int_expr(depth - 1)} else {self.int_expr(depth - 1)})"
        if choice == 2 and self.vars["iarr"]:
            return f"(pget {self.pick_var('iarr')} {self.idx()})"
        if choice == 3 and self.vars["iarr"]:
            return f"{self.pick_var('iarr')}.({self.idx()})"
        if choice == 4 and self.vars["iarr"]:
            return f"(Array.length {self.pick_var('iarr')})"
        if choice == 5:
            name = self.fresh("n")
            bound = self.int_expr(depth - 1)
            self.vars["int"].append(name)
            body = self.int_expr(depth - 1)
            self.vars["int"].remove(name)
            return f"(let {name} = {bound} in {body})"
        if choice == 6 and self.vars["iarr"]:
            return f"(plast {self.pick_var('iarr')})"
        if choice == 7:
            return f"(pid {self.int_expr(depth - 1)})"
        return self.int_expr(0)

    def float_expr(self, depth: int) -> str:
        r = self.rng
        if depth <= 0:
            v = self.pick_var("float")
            if v is not None and r.random() < 0.6:
                return v
            return r.choice(["0.5", "1.25", "2.0", "0.0", "3.5"])
        choice = r.randrange(6)
        if choice == 0:
            return f"({self.float_expr(depth - 1)} {r.choice(['+.', '-.', '*.'])} {self.float_expr(depth - 1)})"
        if choice == 1:
            return f"(if {self.bool_expr(depth - 1)} then {self.float_expr(depth - 1)} else {self.float_expr(depth - 1)})"
        if choice == 2 and self.vars["farr"]:
            return f"(pget {self.pick_var('farr')} {self.idx()})"
        if choice == 3 and self.vars["farr"]:
            return f"{self.pick_var('farr')}.({self.idx()})"
        if choice == 4 and self.vars["farr"]:
            return f"(plast {self.pick_var('farr')})"
        if choice == 5:
            return f"(pid {self.float_expr(depth - 1)})"
        return self.float_expr(0)

    def bool_expr(self, depth: int) -> str:
        r = self.rng
        if depth <= 0:
            return r.choice(["true", "false"])
        choice = r.randrange(4)
        if choice == 0:
            op = r.choice(["=", "<", ">", "<=", ">="])
            return f"({self.int_expr(depth - 1)} {op} {self.int_expr(depth - 1)})"
        if choice == 1:
            op = r.choice(["<", "<="])
            return f"({self.float_expr(depth - 1)} {op} {self.float_expr(depth - 1)})"
        if choice == 2:
            op = r.choice(["&&", "||"])
            return f"({self.bool_expr(depth - 1)} {op} {self.bool_expr(depth - 1)})"
        return r.choice(["true", "false"])

    def unit_expr(self, depth: int) -> str:
        r = self.rng
        choices = ["print_int", "print_float", "newline"]
        if self.vars["iarr"]:
            choices += ["iset", "iswap", "ifill", "iset_direct"]
        if self.vars["farr"]:
            choices += ["fset", "fswap", "ffill"]
        if depth > 0:
            choices += ["seq", "if"]
        c = r.choice(choices)
        if c == "print_int":
            return f"print_int {self.int_expr(max(depth - 1, 0))}"
        if c == "print_float":
            return f"print_float {self.float_expr(max(depth - 1, 0))}"
        if c == "newline":
            return "newline ()"
        if c == "iset":
            return f"pset {self.pick_var('iarr')} {self.idx()} {self.int_expr(max(depth - 1, 0))}"
        if c == "iset_direct":
            return f"{self.pick_var('iarr')}.({self.idx()}) <- {self.int_expr(max(depth - 1, 0))}"
        if c == "iswap":
            return f"pswap {self.pick_var('iarr')} {self.idx()} {self.idx()}"
        if c == "ifill":
            return f"pfill {self.pick_var('iarr')} {self.int_expr(0)}"
        if c == "fset":
            return f"pset {self.pick_var('farr')} {self.idx()} {self.float_expr(max(depth - 1, 0))}"
        if c == "fswap":
            return f"pswap {self.pick_var('farr')} {self.idx()} {self.idx()}"
        if c == "ffill":
            return f"pfill {self.pick_var('farr')} {self.float_expr(0)}"
        if c == "seq":
            return f"({self.unit_expr(depth - 1)}; {self.unit_expr(depth - 1)})"
        assert c == "if"
        return f"(if {self.bool_expr(depth - 1)} then ({self.unit_expr(depth - 1)}) else ({self.unit_expr(depth - 1)}))"

    # -- whole programs

    def gen_program(self) -> str:
        r = self.rng
        lines = ["open Polylib"]
        body: list[str] = []
        for base, ty, mk in (
            ("ia", "iarr", lambda: f"Array.make {ARRAY_LEN} {self.int_expr(0)}"),
            ("fa", "farr", lambda: f"Array.make {ARRAY_LEN} {self.float_expr(0)}"),
        ):
            for _ in range(r.randrange(1, 3)):
                name = self.fresh(base)
                body.append(f"let {name} = {mk()} in")
                self.vars[ty].append(name)
        if r.random() < 0.5:
            # a local polymorphic helper, sometimes shadow-prone
            body.append("let grab a i = pget a i in")
            self.vars_grab = True
        else:
            self.vars_grab = False
        for _ in range(r.randrange(1, 4)):
            name = self.fresh("x")
            body.append(f"let {name} = {self.int_expr(2)} in")
            self.vars["int"].append(name)
        for _ in range(r.randrange(0, 3)):
            name = self.fresh("y")
            body.append(f"let {name} = {self.float_expr(2)} in")
            self.vars["float"].append(name)
        stmts = [self.unit_expr(2) for _ in range(r.randrange(2, 6))]
        if self.vars_grab:
            stmts.append(f"print_int (grab {self.pick_var('iarr')} {self.idx()})")
            stmts.append(f"print_float (grab {self.pick_var('farr')} {self.idx()})")
        stmts.append(f"print_int {self.int_expr(2)}")
        stmts.append("newline ()")
        stmts.append(f"print_float {self.float_expr(2)}")
        stmts.append("newline ()")
        body.append(";\n  ".join(stmts))
        lines.append("let main =\n  " + "\n  ".join(body))
        return "\n".join(lines) + "\n"


def generate(seed: int) -> str:
    return ProgramGen(seed).gen_program()

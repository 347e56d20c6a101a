# Guest-side runner for generated visual programs.
#
# Invoked as `python3 -I -S -c <this source> <job.json>`. Executes each code
# block of a path in one shared namespace and writes line-delimited records to
# the snapshot descriptor named in the job:
#
#   {"begin": <block id>}
#   {"block": <block id>, "vars": {name: {"kind": ..., "value": ...}}}
#   {"end": <block id>, "wall_ms": n, "calls": [{"fn", "args", "ret"}]}
#   {"fail": <block id>, "status": "compile_error"|"runtime_error", "message": ..., "wall_ms": n}
#   {"final": {"status": "ok"|"error", "output": ..., "message": ...}}
#
# Guest stdout is left on fd 1; only the epilogue's prints are captured.

import ast
import io
import json
import math
import os
import sys
import time

MAX_VALUE_CHARS = 2048
TRUNCATION_SUFFIX = "...[truncated]"
MAX_DEPTH = 16


def _deny_network():
    try:
        import socket
    except Exception:
        return

    def denied(*_args, **_kwargs):
        raise PermissionError("network access is denied in the sandbox")

    for name in ("socket", "create_connection", "getaddrinfo", "gethostbyname",
                 "create_server", "socketpair", "fromfd"):
        if hasattr(socket, name):
            setattr(socket, name, denied)


class Region:
    __slots__ = ("x1", "y1", "x2", "y2")

    def __init__(self, x1, y1, x2, y2):
        self.x1, self.y1, self.x2, self.y2 = x1, y1, x2, y2

    @property
    def width(self):
        return self.x2 - self.x1

    @property
    def height(self):
        return self.y2 - self.y1

    @property
    def area(self):
        return self.width * self.height

    def __eq__(self, other):
        return isinstance(other, Region) and self._coords() == other._coords()

    def __hash__(self):
        return hash(self._coords())

    def _coords(self):
        return (self.x1, self.y1, self.x2, self.y2)

    def __repr__(self):
        return "region(" + ",".join(_render_number(c) for c in self._coords()) + ")"


class ImageRef:
    __slots__ = ("ref",)

    def __init__(self, ref):
        self.ref = ref

    def __repr__(self):
        return "image"


class StubLookupError(LookupError):
    pass


def _render_number(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def kind_of(v):
    if isinstance(v, bool):
        return "boolean"
    if isinstance(v, (int, float)):
        return "number"
    if isinstance(v, str):
        return "text"
    if isinstance(v, Region):
        return "image_region"
    if isinstance(v, (list, tuple, set, frozenset)):
        return "list"
    if isinstance(v, dict):
        return "map"
    return "opaque"


def render(v, top=True, depth=0):
    if depth > MAX_DEPTH:
        return "..."
    if isinstance(v, bool) or isinstance(v, (int, float)):
        return _render_number(v)
    if isinstance(v, str):
        return v if top else json.dumps(v, ensure_ascii=False)
    if isinstance(v, Region):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(render(x, False, depth + 1) for x in v) + "]"
    if isinstance(v, (set, frozenset)):
        return "[" + ", ".join(sorted(render(x, False, depth + 1) for x in v)) + "]"
    if isinstance(v, dict):
        items = sorted((render(k, False, depth + 1), render(x, False, depth + 1))
                       for k, x in v.items())
        return "{" + ", ".join(k + ": " + x for k, x in items) + "}"
    if isinstance(v, ImageRef):
        return "image"
    name = getattr(v, "__name__", None)
    if name is not None:
        return "<" + type(v).__name__ + " " + str(name) + ">"
    return "<" + type(v).__name__ + ">"


def capped(text):
    if len(text) > MAX_VALUE_CHARS:
        return text[:MAX_VALUE_CHARS] + TRUNCATION_SUFFIX
    return text


def canonical(v):
    if isinstance(v, ImageRef):
        return "image"
    if isinstance(v, Region):
        return {"region": list(v._coords())}
    if isinstance(v, (list, tuple)):
        return [canonical(x) for x in v]
    if isinstance(v, dict):
        return {str(k): canonical(x) for k, x in v.items()}
    return v


def decode(v):
    if isinstance(v, dict):
        if set(v.keys()) == {"region"} and isinstance(v["region"], list) and len(v["region"]) == 4:
            return Region(*v["region"])
        return {k: decode(x) for k, x in v.items()}
    if isinstance(v, list):
        return [decode(x) for x in v]
    return v


def table_key(fn, args):
    return fn + ":" + json.dumps(args, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class Stubs:
    FUNCTIONS = ("find", "exists", "vqa", "llm_query", "compute")

    def __init__(self, entries):
        self.table = {}
        for e in entries:
            self.table[table_key(e["fn"], e.get("args", []))] = e.get("ret")
        self.calls = []

    def make(self, fn):
        def stub(*args):
            canon = [canonical(a) for a in args]
            key = table_key(fn, canon)
            args_text = ", ".join(render(a, False) for a in args)
            if key not in self.table:
                raise StubLookupError("no stub result for " + fn + "(" + args_text + ")")
            ret = decode(self.table[key])
            self.calls.append({"fn": fn, "args": capped(args_text), "ret": capped(render(ret, False))})
            return ret

        stub.__name__ = fn
        return stub


class AssignedNames(ast.NodeVisitor):
    """Top-level names a block binds; nested scopes are not entered."""

    def __init__(self):
        self.names = set()

    def visit_Name(self, node):
        if isinstance(node.ctx, (ast.Store, ast.Del)):
            self.names.add(node.id)

    def visit_FunctionDef(self, node):
        self.names.add(node.name)

    visit_AsyncFunctionDef = visit_FunctionDef

    def visit_ClassDef(self, node):
        self.names.add(node.name)

    def visit_Lambda(self, node):
        pass

    def _comprehension(self, node):
        pass

    visit_ListComp = visit_SetComp = visit_DictComp = visit_GeneratorExp = _comprehension

    def visit_Import(self, node):
        for alias in node.names:
            self.names.add((alias.asname or alias.name).split(".")[0])

    visit_ImportFrom = visit_Import

    def visit_ExceptHandler(self, node):
        if node.name:
            self.names.add(node.name)
        self.generic_visit(node)


def snapshot_state(namespace, hidden):
    state = {}
    for name, value in namespace.items():
        if name.startswith("__") or name in hidden:
            continue
        try:
            state[name] = (kind_of(value), capped(render(value)))
        except Exception as exc:  # rendering must never take the run down
            state[name] = ("opaque", "<unrenderable " + type(exc).__name__ + ">")
    return state


def describe(exc):
    if isinstance(exc, SyntaxError):
        where = " (line " + str(exc.lineno) + ")" if exc.lineno else ""
        return type(exc).__name__ + ": " + str(exc.msg) + where
    return type(exc).__name__ + ": " + str(exc)


def main():
    with open(sys.argv[1], encoding="utf-8") as f:
        job = json.load(f)
    out = os.fdopen(int(job.get("snapshot_fd", 3)), "w", encoding="utf-8", buffering=1)

    def emit(record):
        out.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
        out.flush()

    _deny_network()
    stubs = Stubs(job.get("stubs", []))
    namespace = {"__name__": "__guest__", "__builtins__": __builtins__}
    namespace["image"] = ImageRef(job.get("visual_ref", ""))
    namespace["Region"] = Region
    for fn in Stubs.FUNCTIONS:
        namespace[fn] = stubs.make(fn)
    prelude = {name: namespace[name] for name in namespace if not name.startswith("__")}

    def hidden_names():
        return {n for n, v in prelude.items() if namespace.get(n) is v}

    before = snapshot_state(namespace, hidden_names())
    all_ok = True
    for block in job["blocks"]:
        block_id = block["id"]
        emit({"begin": block_id})
        started = time.monotonic()
        stubs.calls = []
        try:
            tree = compile(block["source"], "<" + block_id + ">", "exec", ast.PyCF_ONLY_AST)
            code = compile(tree, "<" + block_id + ">", "exec")
        except (SyntaxError, ValueError) as exc:
            emit({"fail": block_id, "status": "compile_error", "message": describe(exc),
                  "wall_ms": int((time.monotonic() - started) * 1000)})
            all_ok = False
            break
        try:
            exec(code, namespace)
        except BaseException as exc:  # SystemExit and friends are guest errors too
            if isinstance(exc, KeyboardInterrupt):
                raise
            emit({"fail": block_id, "status": "runtime_error", "message": describe(exc),
                  "wall_ms": int((time.monotonic() - started) * 1000)})
            all_ok = False
            break
        visitor = AssignedNames()
        visitor.visit(tree)
        after = snapshot_state(namespace, hidden_names())
        changed = {n for n in after if n in visitor.names or before.get(n) != after[n]}
        emit({"block": block_id,
              "vars": {n: {"kind": after[n][0], "value": after[n][1]} for n in sorted(changed)}})
        emit({"end": block_id, "wall_ms": int((time.monotonic() - started) * 1000),
              "calls": stubs.calls})
        before = after

    epilogue = job.get("epilogue")
    if all_ok and epilogue is not None:
        captured = io.StringIO()
        real_stdout = sys.stdout
        sys.stdout = captured
        try:
            exec(compile(epilogue, "<final>", "exec"), namespace)
            sys.stdout = real_stdout
            emit({"final": {"status": "ok", "output": capped(captured.getvalue())}})
        except BaseException as exc:
            sys.stdout = real_stdout
            if isinstance(exc, KeyboardInterrupt):
                raise
            emit({"final": {"status": "error", "message": describe(exc),
                            "output": capped(captured.getvalue())}})
    out.close()


main()

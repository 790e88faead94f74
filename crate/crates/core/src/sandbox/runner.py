# Sandbox runner. Reads one JSON job on stdin, writes one JSON line on stdout.
#
# Job:    {"mode": "trace"|"judge", "code": str, "stages": [{"atom_id", "fn_name"}],
#          "inputs": [json value], "tests": [str],
#          "limits": {"wall_clock_ms": int, "max_output_bytes": int}}
# Result: {"status": "ok", "traces": [...]} | {"status": "ok", "judge": {...}}
#         | {"status": "compile_error" | "load_error" | "serialization_failure", "detail": str}
#
# Values cross the boundary tagged: {"t": "Int"|"String"|"List[Int]"|"List[String]"|"List", "v": ...}
# ("List" for an empty list, typed by the caller). A null value is JSON null.

import builtins as _b
import _json
import os as _os
import signal as _signal
import sys as _sys

_out = _sys.stdout
_open = _b.open
_import = _b.__import__
_exec = _b.exec
_compile = _b.compile
_realpath = _os.path.realpath
_sep = _os.sep
_I64 = (-(2 ** 63), 2 ** 63 - 1)

_BLOCKED = frozenset((
    "os", "sys", "subprocess", "shutil", "socket", "pathlib", "ctypes", "cffi",
    "multiprocessing", "threading", "_thread", "concurrent", "asyncio", "signal",
    "importlib", "runpy", "pty", "tty", "termios", "fcntl", "mmap", "resource",
    "tempfile", "glob", "io", "_io", "http", "urllib", "ftplib", "smtplib", "ssl",
    "select", "selectors", "posix", "nt", "pickle", "shelve", "dbm", "sqlite3",
    "code", "codeop", "gc", "inspect", "webbrowser", "zipimport", "builtins",
))


class _Timeout(BaseException):
    pass


class _OutputLimit(Exception):
    pass


class _CappedOut:
    def __init__(self, cap):
        self.cap = cap
        self.used = 0

    def write(self, s):
        self.used += len(str(s).encode("utf-8", "replace"))
        if self.used > self.cap:
            raise _OutputLimit("output limit of %d bytes exceeded" % self.cap)
        return len(s)

    def flush(self):
        pass


def _guard(workdir, cap):
    root = _realpath(workdir)

    def guarded_import(name, globals=None, locals=None, fromlist=(), level=0):
        if level == 0 and name.split(".")[0] in _BLOCKED:
            raise ImportError("import of %r is not allowed in the sandbox" % name)
        return _import(name, globals, locals, fromlist, level)

    def guarded_open(file, mode="r", *args, **kwargs):
        if not isinstance(file, (str, bytes)):
            raise PermissionError("file descriptors are not allowed in the sandbox")
        path = _realpath(file if isinstance(file, str) else file.decode())
        if path != root and not path.startswith(root + _sep):
            raise PermissionError("access outside the working directory: %r" % (file,))
        return _open(file, mode, *args, **kwargs)

    _b.__import__ = guarded_import
    _b.open = guarded_open
    _sys.stdout = _CappedOut(cap)
    _sys.stderr = _CappedOut(cap)


def _on_alarm(signum, frame):
    raise _Timeout()


def _encode(value):
    if value is None:
        return None
    t = type(value)
    if t is int:
        if not (_I64[0] <= value <= _I64[1]):
            raise ValueError("integer %d does not fit in 64 bits" % value)
        return {"t": "Int", "v": value}
    if t is str:
        return {"t": "String", "v": value}
    if t is list:
        if not value:
            return {"t": "List", "v": []}
        if all(type(x) is int for x in value):
            for x in value:
                if not (_I64[0] <= x <= _I64[1]):
                    raise ValueError("list element does not fit in 64 bits")
            return {"t": "List[Int]", "v": list(value)}
        if all(type(x) is str for x in value):
            return {"t": "List[String]", "v": list(value)}
        raise ValueError("list with mixed or unsupported element types")
    raise ValueError("unsupported type %s" % t.__name__)


class _Decoding:
    strict = True
    object_hook = None
    object_pairs_hook = None
    parse_float = float
    parse_int = int
    parse_constant = None
    memo = {}


def _unencodable(obj):
    raise TypeError("%s is not JSON serializable" % type(obj).__name__)


def _loads(text):
    obj, end = _json.make_scanner(_Decoding())(text, 0)
    if text[end:].strip():
        raise ValueError("trailing data after job")
    return obj


def _dumps(obj):
    enc = _json.make_encoder({}, _unencodable, _json.encode_basestring_ascii, None, ":", ",", False, False, False)
    return "".join(enc(obj, 0))


def _describe(exc):
    msg = str(exc)
    name = type(exc).__name__
    return "%s: %s" % (name, msg) if msg else name


def _load(code, ns):
    try:
        compiled = _compile(code, "<candidate>", "exec")
    except SyntaxError as exc:
        return "compile_error", _describe(exc)
    try:
        _exec(compiled, ns)
    except _Timeout:
        return "timeout", "timed out while loading code"
    except BaseException as exc:
        return "load_error", _describe(exc)
    return None, None


def _trace(job, ns):
    stages = job["stages"]
    for st in stages:
        if not callable(ns.get(st["fn_name"])):
            return {"status": "load_error", "detail": "function %r is not defined" % st["fn_name"]}
    traces = []
    timed_out = False
    for raw in job["inputs"]:
        value = raw
        records = []
        overall = "OK"
        for st in stages:
            try:
                encoded_in = _encode(value)
            except ValueError as exc:
                return {"status": "serialization_failure", "detail": str(exc)}
            if timed_out:
                records.append({"atom_id": st["atom_id"], "input": encoded_in, "output": None,
                                "status": "TIMEOUT", "error": "job deadline reached"})
                overall = "TIMEOUT"
                break
            record = {"atom_id": st["atom_id"], "input": encoded_in, "output": None,
                      "status": "OK", "error": None}
            records.append(record)
            try:
                value = ns[st["fn_name"]](value)
            except _Timeout:
                timed_out = True
                record["status"] = "TIMEOUT"
                record["error"] = "job deadline reached"
                overall = "TIMEOUT"
                break
            except BaseException as exc:
                record["status"] = "RAISED"
                record["error"] = _describe(exc)
                overall = "RAISED"
                break
            try:
                record["output"] = _encode(value)
            except ValueError as exc:
                return {"status": "serialization_failure",
                        "detail": "%s returned %s" % (st["atom_id"], exc)}
            if value is None:
                break
        traces.append({"stages": records, "status": overall})
    return {"status": "ok", "traces": traces}


def _judge(job, ns, load_status, load_detail):
    tests = job["tests"]
    total = len(tests)
    if load_status is not None:
        status = "TIMEOUT" if load_status == "timeout" else "RAISED"
        return {"status": "ok", "judge": {"tests_total": total, "tests_passed": 0,
                                          "status": status, "failure_detail": load_detail}}
    passed = 0
    first_failure = None
    status = "OK"
    timed_out = False
    for test in tests:
        if timed_out:
            break
        try:
            _exec(_compile(test, "<test>", "exec"), ns)
            passed += 1
        except _Timeout:
            timed_out = True
            status = "TIMEOUT"
            if first_failure is None:
                first_failure = "timed out during: %s" % test
        except AssertionError as exc:
            if first_failure is None:
                detail = str(exc)
                first_failure = "assertion failed: %s" % test + (" (%s)" % detail if detail else "")
        except BaseException as exc:
            if status == "OK":
                status = "RAISED"
            if first_failure is None:
                first_failure = "%s raised %s" % (test, _describe(exc))
    return {"status": "ok", "judge": {"tests_total": total, "tests_passed": passed,
                                      "status": status, "failure_detail": first_failure}}


def _main():
    job = _loads(_sys.stdin.read())
    limits = job.get("limits", {})
    budget_ms = int(limits.get("wall_clock_ms", 5000))
    # Leave headroom for the reply before the parent's hard kill.
    margin = min(250, budget_ms // 5)
    _signal.signal(_signal.SIGALRM, _on_alarm)
    _guard(_os.getcwd(), int(limits.get("max_output_bytes", 65536)))
    ns = {"__name__": "__main__", "__builtins__": _b}
    _signal.setitimer(_signal.ITIMER_REAL, max(budget_ms - margin, 1) / 1000.0)
    try:
        load_status, load_detail = _load(job["code"], ns)
        if job["mode"] == "judge":
            reply = _judge(job, ns, load_status, load_detail)
        elif load_status == "timeout":
            reply = {"status": "ok", "traces": [
                {"stages": [{"atom_id": job["stages"][0]["atom_id"], "input": _encode(raw),
                             "output": None, "status": "TIMEOUT", "error": load_detail}],
                 "status": "TIMEOUT"}
                for raw in job["inputs"]]}
        elif load_status is not None:
            reply = {"status": load_status, "detail": load_detail}
        else:
            reply = _trace(job, ns)
    except _Timeout:
        reply = {"status": "timeout", "detail": "job deadline reached"}
    finally:
        _signal.setitimer(_signal.ITIMER_REAL, 0)
    _out.write(_dumps(reply) + "\n")
    _out.flush()


_main()

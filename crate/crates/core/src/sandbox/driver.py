# Guest-side runner for the process-direct sandbox backend.
# usage: driver.py JOB_JSON
# Exit codes: candidate's own on stdio runs; 0 ok; 1 uncaught exception;
# 83 compile error; 84 entry point missing; 85 malformed job; 86 arity mismatch.
import json
import sys
import traceback

EXIT_COMPILE = 83
EXIT_NO_ENTRY = 84
EXIT_PROTOCOL = 85
EXIT_ARITY = 86


def _deny_network():
    import socket

    def _denied(*_args, **_kwargs):
        raise OSError("network access is disabled in the sandbox")

    socket.socket = _denied
    socket.create_connection = _denied
    socket.getaddrinfo = _denied


def _canon_str(s):
    out = ['"']
    for ch in s:
        if ch == "\\":
            out.append("\\\\")
        elif ch == '"':
            out.append('\\"')
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\r":
            out.append("\\r")
        elif ch == "\t":
            out.append("\\t")
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append("\\x%02x" % ord(ch))
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def canon(v):
    if v is None:
        return "None"
    if v is True:
        return "True"
    if v is False:
        return "False"
    if isinstance(v, int):
        return str(int(v))
    if isinstance(v, float):
        return repr(float(v))
    if isinstance(v, str):
        return _canon_str(v)
    if isinstance(v, (list, tuple)):
        return "[" + ",".join(canon(x) for x in v) + "]"
    if isinstance(v, dict):
        items = sorted((canon(k), canon(x)) for k, x in v.items())
        return "{" + ",".join(k + ":" + x for k, x in items) + "}"
    if isinstance(v, (set, frozenset)):
        if not v:
            return "set()"
        return "{" + ",".join(sorted(set(canon(x) for x in v))) + "}"
    return repr(v)


def _report_exception(exc):
    traceback.print_exc()
    sys.stderr.write("\n__codegrad_exc__:%s: %s\n" % (type(exc).__name__, str(exc)[:200]))
    sys.stderr.flush()


def _compile(source):
    try:
        return compile(source, "candidate.py", "exec")
    except (SyntaxError, ValueError) as exc:
        traceback.print_exception(type(exc), exc, None)
        sys.stderr.flush()
        sys.exit(EXIT_COMPILE)


def _entry(namespace, name):
    fn = namespace.get(name)
    holder = namespace.get("Solution")
    if not callable(fn) and isinstance(holder, type) and callable(getattr(holder, name, None)):
        try:
            fn = getattr(holder(), name)
        except BaseException as exc:  # noqa: BLE001
            _report_exception(exc)
            sys.exit(1)
    if not callable(fn):
        sys.stderr.write("entry point not found: %s\n" % name)
        sys.exit(EXIT_NO_ENTRY)
    return fn


def main():
    try:
        with open(sys.argv[1], encoding="utf-8") as fh:
            job = json.load(fh)
        mode = job["mode"]
        with open(job["source_path"], encoding="utf-8") as fh:
            source = fh.read()
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write("malformed job: %r\n" % (exc,))
        sys.exit(EXIT_PROTOCOL)

    code = _compile(source)
    if mode == "compile_only":
        return

    _deny_network()
    if mode == "stdio_run":
        namespace = {"__name__": "__main__", "__file__": "candidate.py"}
        sys.argv = ["candidate.py"]
        try:
            exec(code, namespace)
        except SystemExit:
            raise
        except BaseException as exc:  # noqa: BLE001
            _report_exception(exc)
            sys.exit(1)
        return

    namespace = {"__name__": "candidate"}
    try:
        exec(code, namespace)
    except BaseException as exc:  # noqa: BLE001
        _report_exception(exc)
        sys.exit(1)
    fn = _entry(namespace, job.get("entry_point") or "")

    if mode == "call_entry":
        try:
            args = eval(
                job["call_args"],
                {"__builtins__": {}, "inf": float("inf"), "nan": float("nan"), "set": set, "float": float,
                 "None": None, "True": True, "False": False},
            )
        except Exception as exc:  # noqa: BLE001
            sys.stderr.write("malformed call arguments: %r\n" % (exc,))
            sys.exit(EXIT_PROTOCOL)
        try:
            import inspect

            inspect.signature(fn).bind(*args)
        except TypeError as exc:
            sys.stderr.write("__codegrad_exc__:ArityError: %s\n" % exc)
            sys.exit(EXIT_ARITY)
        except ValueError:
            pass
        try:
            result = fn(*args)
        except BaseException as exc:  # noqa: BLE001
            _report_exception(exc)
            sys.exit(1)
        sys.stdout.flush()
        with open(job["result_path"], "w", encoding="utf-8") as fh:
            fh.write(canon(result))
        return

    if mode == "assert":
        namespace["candidate"] = fn
        try:
            exec(compile(job["assert_code"], "check.py", "exec"), namespace)
        except BaseException as exc:  # noqa: BLE001
            _report_exception(exc)
            sys.exit(1)
        return

    sys.stderr.write("unknown mode: %s\n" % mode)
    sys.exit(EXIT_PROTOCOL)


if __name__ == "__main__":
    main()

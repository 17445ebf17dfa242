"""Minimal sandbox worker speaking the line-delimited JSON protocol.

Loaded code must define `heuristic(instance)` returning matrix rows or an
item vector, and/or `score(state)` returning per-item scores.
"""

import argparse
import json
import math
import resource
import sys


def encode(x):
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
    if isinstance(x, list):
        return [encode(v) for v in x]
    return x


def decode(x):
    if isinstance(x, str) and x in ("nan", "inf", "-inf"):
        return float(x)
    return x


def reply(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--cpu-limit", type=float, default=0)
    parser.add_argument("--mem-limit", type=float, default=0)
    parser.add_argument("--request-timeout", type=float, default=0)
    args = parser.parse_args()
    if args.cpu_limit > 0:
        limit = int(math.ceil(args.cpu_limit))
        resource.setrlimit(resource.RLIMIT_CPU, (limit, limit))

    namespace = None
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
            op = req.get("op")
            if op == "ping":
                reply({"ok": True})
            elif op == "load":
                namespace = {"math": math}
                exec(req["code"], namespace)
                reply({"ok": True})
            elif op == "matrix":
                inst = req["instance"]
                out = namespace["heuristic"](inst)
                if out and isinstance(out[0], list):
                    reply({"ok": True, "rows": [encode(r) for r in out]})
                else:
                    reply({"ok": True, "rows": [encode(list(out))]})
            elif op == "score":
                state = dict(req["state"])
                state["remaining_capacity"] = decode(state["remaining_capacity"])
                reply({"ok": True, "scores": encode(list(namespace["score"](state)))})
            else:
                reply({"ok": False, "error": "unknown op %r" % (op,)})
        except Exception as exc:  # reported to the client, never fatal
            reply({"ok": False, "error": "%s: %s" % (type(exc).__name__, exc)})


if __name__ == "__main__":
    main()

"""Reference child process for :class:`~wrsearch.objectives.ExternalObjective`.

Usage::

    python -m wrsearch.worker griewank_modified_6 --negate

Reads one JSON object per line (dimension name -> value, in dimension order)
and answers each with ``{"value": <number>}`` or ``{"error": "..."}``. Works
for one-shot and persistent mode alike; it exits at end of input.
"""

import argparse
import json
import logging
import sys
from typing import Any, Callable, Dict, Optional, TextIO

from wrsearch.objectives import BUILTINS, builtin

logger = logging.getLogger(__name__)

Handler = Callable[[Dict[str, Any]], float]


def handle_line(line: str, handler: Handler) -> Optional[Dict[str, Any]]:
    """Turn one request line into a response object (``None`` for blank lines)."""
    line = line.strip()
    if not line:
        return None
    try:
        request = json.loads(line)
    except json.JSONDecodeError as ex:
        return {"error": f"bad json: {ex}"}
    if not isinstance(request, dict):
        return {"error": "request must be a JSON object"}
    try:
        return {"value": float(handler(request))}
    except Exception as ex:
        return {"error": f"{type(ex).__name__}: {ex}"}


def serve(handler: Handler, stdin: TextIO = sys.stdin, stdout: TextIO = sys.stdout) -> int:
    """Answer requests until end of input; returns the number handled."""
    handled = 0
    for line in stdin:
        response = handle_line(line, handler)
        if response is None:
            continue
        stdout.write(json.dumps(response) + "\n")
        stdout.flush()
        handled += 1
    return handled


def main(argv: Optional[list] = None) -> int:
    parser = argparse.ArgumentParser(description="Line-protocol worker for a built-in objective")
    parser.add_argument("objective", choices=sorted(BUILTINS))
    parser.add_argument("--negate", action="store_true", help="Return -f(x)")
    args = parser.parse_args(argv)

    # stdout carries the protocol; diagnostics go to stderr.
    logging.basicConfig(
        level=logging.WARNING,
        stream=sys.stderr,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    objective = builtin(args.objective, negate=args.negate)
    handled = serve(lambda request: objective(list(request.values())))
    logger.debug("Worker handled %d requests", handled)
    return 0


if __name__ == "__main__":
    sys.exit(main())

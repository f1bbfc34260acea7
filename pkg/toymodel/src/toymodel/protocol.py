"""Line-delimited JSON client for the wireframe grammar server.

The server is the codec CLI's `grammar-serve` subcommand: one request per
line (`{"prefix": [...], "indices": bool}`), one response per line
(`{"valid_ids": [...]}`, optionally `"indices"`, or `{"error": {...}}`).
"""

from __future__ import annotations

import json
import subprocess
import sys


class GrammarServerError(RuntimeError):
    pass


class GrammarClient:
    """One sequential session against a grammar-serve subprocess."""

    def __init__(self, command: list[str] | None = None):
        self.command = command or [sys.executable, "-m", "brepwire.cli",
                                   "grammar-serve"]
        self.proc = subprocess.Popen(self.command, stdin=subprocess.PIPE,
                                     stdout=subprocess.PIPE, text=True)

    def request(self, prefix: list[int], indices: bool = False) -> dict:
        if self.proc.poll() is not None:
            raise GrammarServerError("grammar server exited")
        payload = {"prefix": [int(t) for t in prefix]}
        if indices:
            payload["indices"] = True
        self.proc.stdin.write(json.dumps(payload) + "\n")
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        if not line:
            raise GrammarServerError("grammar server closed the stream")
        return json.loads(line)

    def valid_ids(self, prefix: list[int]) -> list[int] | None:
        """Allowed next tokens, or None when the prefix itself is invalid."""
        response = self.request(prefix)
        if "error" in response:
            return None
        return response["valid_ids"]

    def prefix_indices(self, prefix: list[int]) -> list[list[int]] | None:
        response = self.request(prefix, indices=True)
        if "error" in response:
            return None
        return response["indices"]

    def accepts(self, sequence: list[int]) -> bool:
        """Whole-sequence validity: grammar-clean and terminated by EOS."""
        from .config import TOK_EOS

        if not sequence or sequence[-1] != TOK_EOS:
            return False
        return "error" not in self.request(sequence)

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.stdin.close()
            self.proc.wait(timeout=10)

    def __enter__(self) -> "GrammarClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

"""Out-of-process backend adapter speaking line-delimited JSON.

Protocol: one request object per line on the server's stdin,
one response per line on stdout.

    {"op": "embed_tokens", "args": {"text": "..."}}
    -> {"result": {"tokens": [...], "vectors": [[...], ...]}}
    -> {"error": {"type": "SequenceLengthError", "message": "...", "limit": 512}}

Heavyweight model servers implement the same contract and can live in a
different process (or container) from the pipeline. `python -m
factfilter.remote --backend mock` serves any registered backend.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
from typing import Any, Iterable, Sequence, TextIO

import numpy as np

from . import errors
from .backend import (
    Backend,
    BackendDescriptor,
    DependencyArc,
    TokenEmbeddings,
    create_backend,
    register_backend,
)

_ERROR_TYPES = {
    "DomainError": errors.DomainError,
    "DegenerateInputError": errors.DegenerateInputError,
    "BackendError": errors.BackendError,
    "SequenceLengthError": errors.SequenceLengthError,
    "ConfigurationError": errors.ConfigurationError,
}


def _arc_to_dict(arc: DependencyArc) -> dict[str, Any]:
    return {
        "head_token": arc.head_token,
        "child_token": arc.child_token,
        "relation_label": arc.relation_label,
        "head_index": arc.head_index,
        "child_index": arc.child_index,
    }


def _arc_from_dict(obj: dict[str, Any]) -> DependencyArc:
    return DependencyArc(
        head_token=obj["head_token"],
        child_token=obj["child_token"],
        relation_label=obj["relation_label"],
        head_index=int(obj["head_index"]),
        child_index=int(obj["child_index"]),
    )


def _handle_request(backend: Backend, request: dict[str, Any]) -> dict[str, Any]:
    op = request.get("op")
    args = request.get("args", {})
    if op == "descriptor":
        d = backend.descriptor
        return {"name": d.name, "version": d.version, "deterministic": d.deterministic,
                "max_tokens": d.max_tokens, "thread_safe": d.thread_safe}
    if op == "tokenize":
        return {"tokens": backend.tokenize(args["text"])}
    if op == "embed_tokens":
        emb = backend.embed_tokens(args["text"])
        return {"tokens": list(emb.tokens), "vectors": emb.vectors.tolist()}
    if op == "conditional_token_logprobs":
        return {"logprobs": backend.conditional_token_logprobs(args["source"], args["target"])}
    if op == "arc_entailment_probs":
        arcs = [_arc_from_dict(a) for a in args["arcs"]]
        return {"probs": backend.arc_entailment_probs(args["document"], arcs)}
    if op == "masked_fill_accuracy":
        return {"accuracy": backend.masked_fill_accuracy(
            args["prefix"], args["sentence"], args["mask_positions"])}
    if op == "parse_dependencies":
        arcs = backend.parse_dependencies(args["summary"])
        return {"arcs": [_arc_to_dict(a) for a in arcs]}
    raise errors.BackendError(f"unknown op {op!r}")


def serve(backend: Backend, in_stream: TextIO, out_stream: TextIO) -> None:
    """Answer protocol requests until the input stream closes."""
    for line in in_stream:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            result = _handle_request(backend, request)
            response: dict[str, Any] = {"result": result}
        except errors.FactFilterError as exc:
            payload: dict[str, Any] = {"type": type(exc).__name__, "message": str(exc)}
            if isinstance(exc, errors.SequenceLengthError):
                payload["limit"] = exc.limit
            response = {"error": payload}
        except Exception as exc:  # malformed request; keep the server alive
            response = {"error": {"type": "BackendError", "message": f"bad request: {exc}"}}
        out_stream.write(json.dumps(response, ensure_ascii=False) + "\n")
        out_stream.flush()


class RemoteBackend(Backend):
    """Client half of the protocol; runs the server as a subprocess."""

    def __init__(self, command: Sequence[str]):
        self._command = list(command)
        self._proc = subprocess.Popen(
            self._command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
        )
        info = self._request("descriptor", {})
        self._descriptor = BackendDescriptor(
            name=info["name"],
            version=info["version"],
            deterministic=bool(info["deterministic"]),
            max_tokens=int(info["max_tokens"]),
            # one request/response pipe; client serializes access
            thread_safe=False,
        )

    @property
    def descriptor(self) -> BackendDescriptor:
        return self._descriptor

    def _request(self, op: str, args: dict[str, Any]) -> dict[str, Any]:
        if self._proc.poll() is not None:
            raise errors.BackendError(f"backend process exited with {self._proc.returncode}")
        assert self._proc.stdin is not None and self._proc.stdout is not None
        self._proc.stdin.write(json.dumps({"op": op, "args": args}, ensure_ascii=False) + "\n")
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise errors.BackendError("backend process closed its output stream")
        response = json.loads(line)
        if "error" in response:
            err = response["error"]
            exc_type = _ERROR_TYPES.get(err.get("type", ""), errors.BackendError)
            if exc_type is errors.SequenceLengthError:
                raise errors.SequenceLengthError(err["message"], int(err.get("limit", 0)))
            raise exc_type(err.get("message", "remote backend error"))
        return response["result"]

    def close(self) -> None:
        if self._proc.poll() is None:
            if self._proc.stdin is not None:
                self._proc.stdin.close()
            self._proc.wait(timeout=10)

    def __enter__(self) -> "RemoteBackend":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def tokenize(self, text: str) -> list[str]:
        return list(self._request("tokenize", {"text": text})["tokens"])

    def embed_tokens(self, text: str) -> TokenEmbeddings:
        result = self._request("embed_tokens", {"text": text})
        return TokenEmbeddings(
            tokens=tuple(result["tokens"]),
            vectors=np.asarray(result["vectors"], dtype=np.float64),
        )

    def conditional_token_logprobs(self, source: str, target: str) -> list[float]:
        result = self._request("conditional_token_logprobs",
                               {"source": source, "target": target})
        return [float(v) for v in result["logprobs"]]

    def arc_entailment_probs(self, document: str,
                             arcs: Sequence[DependencyArc]) -> list[float]:
        result = self._request("arc_entailment_probs", {
            "document": document,
            "arcs": [_arc_to_dict(a) for a in arcs],
        })
        return [float(v) for v in result["probs"]]

    def masked_fill_accuracy(self, prefix: str, sentence: str,
                             mask_positions: Iterable[int]) -> float:
        result = self._request("masked_fill_accuracy", {
            "prefix": prefix,
            "sentence": sentence,
            "mask_positions": sorted(set(mask_positions)),
        })
        return float(result["accuracy"])

    def parse_dependencies(self, summary: str) -> list[DependencyArc]:
        result = self._request("parse_dependencies", {"summary": summary})
        return [_arc_from_dict(a) for a in result["arcs"]]


register_backend("remote", lambda command: RemoteBackend(command))


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="factfilter.remote",
        description="Serve a registered backend over stdin/stdout (line-delimited JSON).",
    )
    parser.add_argument("--backend", default="mock", help="registered backend id to serve")
    args = parser.parse_args(argv)
    backend = create_backend(args.backend)
    serve(backend, sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

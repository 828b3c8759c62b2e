"""Serve a trained rewriter behind the chat-completion wire protocol.

POST bodies follow the {"model", "messages": [{"role", "content"}], ...}
shape; the reply puts the generated query, as plain text, into the first
choice's message content. Decoding is greedy and capped, so identical
inputs always produce identical outputs; any temperature in the request
is ignored.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import torch
from transformers import T5ForConditionalGeneration

from .train import load_codec

logger = logging.getLogger(__name__)

MAX_GENERATED_TOKENS = 32


class Rewriter:
    """Loaded checkpoint plus greedy generation."""

    def __init__(self, checkpoint: str | Path):
        checkpoint = Path(checkpoint)
        if not checkpoint.exists():
            raise FileNotFoundError(f"checkpoint directory {checkpoint} does not exist")
        self.model = T5ForConditionalGeneration.from_pretrained(checkpoint)
        self.model.eval()
        self.codec = load_codec(checkpoint)

    def rewrite(self, text: str, max_new_tokens: int = MAX_GENERATED_TOKENS) -> str:
        ids = self.codec.encode(text, 512)
        if not ids:
            ids = [self.model.config.eos_token_id]
        with torch.no_grad():
            output = self.model.generate(
                input_ids=torch.tensor([ids], dtype=torch.long),
                max_new_tokens=max_new_tokens,
                num_beams=1,
                do_sample=False,
            )
        return self.codec.decode(output[0].tolist()[1:])  # drop decoder start


def _extract_user_content(payload: dict) -> str:
    messages = payload.get("messages", [])
    user_parts = [m.get("content", "") for m in messages if m.get("role") == "user"]
    if user_parts:
        return "\n".join(user_parts)
    return "\n".join(m.get("content", "") for m in messages)


def make_server(
    checkpoint: str | Path, port: int, max_workers: int = 4
) -> ThreadingHTTPServer:
    """Build (but do not start) the HTTP server; raises if the port is in
    use or the checkpoint cannot be loaded."""
    rewriter = Rewriter(checkpoint)
    slots = threading.Semaphore(max_workers)

    class Handler(BaseHTTPRequestHandler):
        def _reply(self, status: int, body: dict) -> None:
            data = json.dumps(body, ensure_ascii=False).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):  # health probe
            self._reply(200, {"status": "ok"})

        def do_POST(self):
            try:
                length = int(self.headers.get("Content-Length", "0"))
                payload = json.loads(self.rfile.read(length) or b"{}")
            except (ValueError, json.JSONDecodeError):
                self._reply(400, {"error": "invalid JSON body"})
                return
            text = _extract_user_content(payload)
            max_tokens = min(
                int(payload.get("max_tokens", MAX_GENERATED_TOKENS)), MAX_GENERATED_TOKENS
            )
            with slots:
                try:
                    generated = rewriter.rewrite(text, max_new_tokens=max(1, max_tokens))
                except Exception as exc:  # surface as protocol error, keep serving
                    logger.exception("generation failed")
                    self._reply(500, {"error": str(exc)})
                    return
            # an all-special generation decodes to ""; clients treat empty
            # completions as protocol errors, so send a throwaway token
            if not generated.strip():
                generated = "unknown"
            self._reply(
                200,
                {
                    "model": "chiq-ft-rewriter",
                    "choices": [
                        {
                            "index": 0,
                            "message": {"role": "assistant", "content": generated},
                            "finish_reason": "stop",
                        }
                    ],
                },
            )

        def log_message(self, *args):
            logger.debug("http: %s", args)

    return ThreadingHTTPServer(("127.0.0.1", port), Handler)


def serve_forever(checkpoint: str | Path, port: int, max_workers: int = 4) -> None:
    server = make_server(checkpoint, port, max_workers)
    logger.info("serving %s on port %d", checkpoint, server.server_address[1])
    try:
        server.serve_forever()
    finally:
        server.server_close()

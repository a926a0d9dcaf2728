#!/usr/bin/env python3
"""Build the 20 Newsgroups fixture used by the acceptance suite.

Samples documents from the 20 Newsgroups training split, then runs
`semtopic fit` against a local embedding server backed by
sentence-transformers. Every text the pipeline asks for is recorded and
written out as a `file:` vector store, so later fits run offline.

Output (default fixtures/20ng):
    corpus.jsonl
    vectors.vecs / vectors.keys

Needs scikit-learn, sentence-transformers and network access on first run.
"""

import argparse
import json
import random
import shutil
import struct
import subprocess
import sys
import tempfile
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np
from sentence_transformers import SentenceTransformer
from sklearn.datasets import fetch_20newsgroups

ROOT = Path(__file__).resolve().parent.parent


def sample_documents(n, seed):
    data = fetch_20newsgroups(subset="train", remove=("headers", "footers", "quotes"))
    docs = [(i, " ".join(t.split())) for i, t in enumerate(data.data)]
    docs = [(i, t) for i, t in docs if len(t) >= 40]
    random.Random(seed).shuffle(docs)
    return sorted(docs[:n])


class Recorder:
    def __init__(self, model_name):
        self.model = SentenceTransformer(model_name)
        self.vectors = {}
        self.lock = threading.Lock()

    def embed(self, texts):
        vecs = self.model.encode(texts, batch_size=64, normalize_embeddings=True)
        with self.lock:
            for t, v in zip(texts, vecs):
                self.vectors.setdefault(t, np.asarray(v, dtype="<f4"))
        return vecs


def serve(recorder):
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
            vecs = recorder.embed(body["texts"])
            out = json.dumps({"vectors": vecs.tolist(), "dim": int(vecs.shape[1])}).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(out)))
            self.end_headers()
            self.wfile.write(out)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server


def write_store(vectors, base):
    keys = list(vectors)
    if any("\n" in k for k in keys):
        sys.exit("a text contains a newline")
    dim = len(next(iter(vectors.values())))
    with open(f"{base}.vecs", "wb") as f:
        f.write(b"SEMB1" + struct.pack("<IIB", len(keys), dim, 1))
        for k in keys:
            f.write(vectors[k].tobytes())
    Path(f"{base}.keys").write_text("".join(k + "\n" for k in keys), encoding="utf-8")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=ROOT / "fixtures" / "20ng")
    ap.add_argument("--docs", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--model", default="sentence-transformers/all-MiniLM-L6-v2")
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    corpus = args.out / "corpus.jsonl"
    with corpus.open("w", encoding="utf-8") as f:
        for i, text in sample_documents(args.docs, args.seed):
            f.write(json.dumps({"id": f"20ng-{i}", "text": text}) + "\n")

    recorder = Recorder(args.model)
    server = serve(recorder)
    work = Path(tempfile.mkdtemp())
    try:
        cmd = [
            "cargo", "run", "--release", "-q", "-p", "semtopic-cli", "--",
            "fit", "--profile", "newsgroups",
            "--corpus", str(corpus), "--format", "jsonl",
            "--provider", f"http://127.0.0.1:{server.server_port}",
            "--embed-model", args.model,
            "-o", str(work / "model"),
        ]
        subprocess.run(cmd, cwd=ROOT, check=True)
    finally:
        server.shutdown()
        shutil.rmtree(work, ignore_errors=True)

    write_store(recorder.vectors, args.out / "vectors")
    print(f"{len(recorder.vectors)} vectors written to {args.out}")


if __name__ == "__main__":
    main()

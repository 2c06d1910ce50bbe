import json
import os
import shutil
import subprocess
from pathlib import Path

import pytest

SOURCE_DIR = Path(os.environ.get("MEMEIFY_SOURCE_DIR", Path(__file__).resolve().parents[2]))
SAMPLE = SOURCE_DIR / "data" / "sample"


def cli_path():
    path = os.environ.get("MEMEIFY_CLI") or shutil.which("memeify")
    if not path:
        pytest.skip("memeify CLI not available")
    return path


def run_cli(*args, check=True):
    proc = subprocess.run([cli_path(), *map(str, args)], capture_output=True, text=True, timeout=120)
    if check and proc.returncode != 0:
        raise AssertionError(f"memeify {' '.join(map(str, args))} exited {proc.returncode}:\n{proc.stderr}")
    return proc


@pytest.fixture(scope="session")
def sample_dir():
    return SAMPLE


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """Runs the full sample pipeline once; returns the output directory."""
    out = tmp_path_factory.mktemp("pipeline")
    run_cli("ingest", "--input", SAMPLE / "corpus.jsonl", "--stats-out", out / "stats.json")
    run_cli("embed", "--table", SAMPLE / "embeddings.txt", "--corpus", SAMPLE / "corpus.jsonl",
            "--out", out / "vectors.jsonl")
    run_cli("cluster", "--vectors", out / "vectors.jsonl", "--k", 5, "--seed", 7,
            "--names", SAMPLE / "theme_names.conf", "--out", out / "themes.json")
    run_cli("train", "--corpus", SAMPLE / "corpus.jsonl", "--out", out / "lm.json")
    run_cli("index", "--images", SAMPLE / "images", "--out", out / "index.json", "--seed", 3)
    (out / "serve.conf").write_text(
        "\n".join([
            "listen_address = 127.0.0.1",
            "port = 0",
            f"theme_model = {out / 'themes.json'}",
            f"language_model = {out / 'lm.json'}",
            f"lsh_index = {out / 'index.json'}",
            f"class_images = {SAMPLE / 'images'}",
            "seed = 5",
            "background_refill = false",
        ]) + "\n")
    return out


@pytest.fixture(scope="session")
def api_schema():
    return json.loads((SOURCE_DIR / "docs" / "api-schema.json").read_text())

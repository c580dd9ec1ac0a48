#!/usr/bin/env python3
"""
Freiburg sequence downloader.
Fetches TUM RGB-D archives listed in config/freiburg_sequences.json and
unpacks them into DATA_DIR, checking sha256 where the manifest gives one.
Writes intrinsics.json next to each sequence so odometry runs pick up
the per-camera calibration.
"""

import hashlib
import json
import logging
import os
import sys
import tarfile
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from dotenv import load_dotenv
load_dotenv()

import click
import requests

from app.dataset import INTRINSICS_FILE
from app.models import IntrinsicsConfig

# Set up logging
LOG_DIR = project_root / os.getenv("LOG_DIR", "logs")
LOG_DIR.mkdir(exist_ok=True)
LOG_FILE = LOG_DIR / "download.log"

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s',
    handlers=[
        logging.FileHandler(LOG_FILE),
        logging.StreamHandler()
    ]
)

logger = logging.getLogger(__name__)

# Configuration
MANIFEST = project_root / "config" / "freiburg_sequences.json"
DATA_DIR = Path(os.getenv("DATA_DIR", project_root / "data"))
CHUNK_SIZE = 1 << 20
TIMEOUT_SECONDS = 60


def load_manifest(path: Path = MANIFEST) -> dict:
    with open(path) as f:
        return json.load(f)


def sha256_of(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(CHUNK_SIZE), b""):
            digest.update(chunk)
    return digest.hexdigest()


def download(url: str, target: Path) -> Path:
    """Stream url into target through a .part file"""
    partial = target.with_suffix(target.suffix + ".part")
    logger.info(f"Downloading {url}")

    with requests.get(url, stream=True, timeout=TIMEOUT_SECONDS) as response:
        response.raise_for_status()
        total = int(response.headers.get("content-length", 0))
        written = 0
        with open(partial, "wb") as f:
            for chunk in response.iter_content(chunk_size=CHUNK_SIZE):
                f.write(chunk)
                written += len(chunk)

    if total and written != total:
        partial.unlink(missing_ok=True)
        raise IOError(f"Truncated download: {written} of {total} bytes")

    partial.replace(target)
    logger.info(f"Saved {target.name} ({written / 1e6:.1f} MB)")
    return target


def fetch_sequence(entry: dict, manifest: dict, data_dir: Path, keep_archive: bool = False) -> bool:
    """Download, verify and unpack one sequence. Returns True on success."""
    name = entry["name"]
    camera = entry["camera"]
    sequence_dir = data_dir / name

    if (sequence_dir / "depth.txt").exists():
        logger.info(f"{name}: already present, skipping")
        return True

    url = f"{manifest['base_url']}/{camera}/{name}.tgz"
    archive = data_dir / f"{name}.tgz"

    try:
        if not archive.exists():
            download(url, archive)

        expected = entry.get("sha256")
        if expected:
            actual = sha256_of(archive)
            if actual != expected:
                logger.error(f"{name}: checksum mismatch (expected {expected}, got {actual})")
                archive.unlink()
                return False
        else:
            logger.warning(f"{name}: no checksum in manifest, sha256 {sha256_of(archive)}")

        with tarfile.open(archive) as tar:
            tar.extractall(data_dir, filter="data")

        intrinsics = IntrinsicsConfig(**manifest["cameras"][camera])
        (sequence_dir / INTRINSICS_FILE).write_text(intrinsics.to_json() + "\n")

        if not keep_archive:
            archive.unlink()

        logger.info(f"{name}: ready in {sequence_dir}")
        return True

    except (requests.RequestException, IOError, tarfile.TarError) as e:
        logger.error(f"{name}: {e}")
        return False


@click.command()
@click.argument("names", nargs=-1)
@click.option("--all", "fetch_all", is_flag=True, help="Fetch every sequence in the manifest")
@click.option("--list", "list_only", is_flag=True, help="List known sequences and exit")
@click.option("--keep-archive", is_flag=True, help="Keep the .tgz after unpacking")
@click.option("--data-dir", type=click.Path(file_okay=False), default=str(DATA_DIR), show_default=True)
def main(names, fetch_all, list_only, keep_archive, data_dir):
    """Download Freiburg RGB-D sequences by NAME (e.g. rgbd_dataset_freiburg1_xyz)."""
    manifest = load_manifest()
    entries = {entry["name"]: entry for entry in manifest["sequences"]}

    if list_only:
        for name, entry in entries.items():
            click.echo(f"{name}  ({entry['camera']})")
        return

    wanted = list(entries) if fetch_all else list(names)
    if not wanted:
        logger.error("No sequences requested; pass names, --all or --list")
        sys.exit(2)

    unknown = [name for name in wanted if name not in entries]
    if unknown:
        logger.error(f"Unknown sequence(s): {', '.join(unknown)}")
        sys.exit(2)

    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)

    logger.info("=" * 60)
    logger.info(f"Fetching {len(wanted)} sequence(s) into {data_dir}")
    logger.info("=" * 60)

    failures = [name for name in wanted if not fetch_sequence(entries[name], manifest, data_dir, keep_archive)]

    if failures:
        logger.error(f"Failed: {', '.join(failures)}")
        sys.exit(3)
    logger.info("All sequences ready")


if __name__ == "__main__":
    main()

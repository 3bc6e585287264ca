import os
import json
import hashlib
import logging
from typing import Dict, Any, Iterable, Union

import numpy as np
import pandas as pd
from PIL import Image


def ensure_folder(foldername: str) -> str:
    """Ensure the specified folder exists."""
    if not os.path.exists(foldername):
        os.makedirs(foldername)
        logging.info(f"Created folder: {foldername}")
    return foldername


def export_output(data: pd.DataFrame, output_path: str) -> str:
    """Export DataFrame to CSV file."""
    try:
        os.makedirs(os.path.dirname(output_path) or '.', exist_ok=True)
        data.to_csv(output_path, index=False)
        logging.info(f"Successfully exported data to {output_path}")
        return output_path
    except Exception as e:
        logging.error(f"Error exporting data: {e}")
        raise


def derive_seed(root: int, purpose: str, *indices: int) -> int:
    """
    Derive an independent 64-bit seed from a root seed.

    Hashing (root, purpose, indices) separates the random streams of different
    consumers so that results do not depend on execution order.

    Args:
        root: Root seed of the run
        purpose: Domain-separation label, e.g. "scene" or "regions"
        indices: Any number of integer indices (sample index, timestep, ...)

    Returns:
        Unsigned 64-bit seed
    """
    h = hashlib.blake2b(digest_size=8, person=b'croplab-seed')
    h.update(int(root).to_bytes(8, 'little', signed=False))
    h.update(purpose.encode('utf-8'))
    for index in indices:
        h.update(b'\x1f')
        h.update(int(index).to_bytes(8, 'little', signed=True))
    return int.from_bytes(h.digest(), 'little')


def make_rng(root: int, purpose: str, *indices: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, purpose, *indices))


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(',', ':'), default=str)


def config_hash(data: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON rendering of a resolved config."""
    return hashlib.sha256(canonical_json(data).encode('utf-8')).hexdigest()


def file_hash(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


def directory_hash(path: str, suffixes: Iterable[str] = ('.pgm', '.ppm', '.csv')) -> str:
    """Hash every matching file of a directory in name order."""
    digest = hashlib.sha256()
    for name in sorted(os.listdir(path)):
        if not name.endswith(tuple(suffixes)):
            continue
        digest.update(name.encode('utf-8'))
        digest.update(file_hash(os.path.join(path, name)).encode('ascii'))
    return digest.hexdigest()


def write_json(data: Dict[str, Any], output_path: str) -> str:
    os.makedirs(os.path.dirname(output_path) or '.', exist_ok=True)
    with open(output_path, 'w') as f:
        json.dump(data, f, sort_keys=True, indent=2, default=str)
        f.write('\n')
    logging.debug(f"Wrote {output_path}")
    return output_path


def read_json(path: str) -> Dict[str, Any]:
    with open(path, 'r') as f:
        return json.load(f)


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Quantize a [0, 1] image to 8-bit gray levels."""
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(image: np.ndarray, output_path: str) -> str:
    """
    Write a [0, 1] grayscale (or RGB) image as binary PGM (P5) / PPM (P6), maxval 255.

    Args:
        image: float array of shape (H, W) or (H, W, 3)
        output_path: Destination file path

    Returns:
        The path written
    """
    pixels = to_uint8(image)
    os.makedirs(os.path.dirname(output_path) or '.', exist_ok=True)
    Image.fromarray(pixels).save(output_path, format='PPM')
    return output_path


def read_pgm(path: Union[str, os.PathLike]) -> np.ndarray:
    """Read a P5/P6 file back into a float32 image in [0, 1]."""
    with Image.open(path) as img:
        pixels = np.asarray(img, dtype=np.uint8)
    return (pixels.astype(np.float32) / 255.0)

"""Binary 8-bit PGM (P5) reading and writing for stacks and fields."""

from pathlib import Path

import numpy as np

from .layout import validate_field, validate_stack


def write_pgm(path, image) -> None:
    image = np.asarray(image)
    if image.ndim != 2 or image.min() < 0 or image.max() > 255:
        raise ValueError("PGM image must be 2-D with values in [0, 255]")
    H, W = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{W} {H}\n255\n".encode("ascii"))
        fh.write(image.astype(np.uint8).tobytes())


def _tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out, pos = [], 0
    while len(out) < count:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        out.append(data[start:pos])
    return out, pos + 1


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    (magic, w, h, maxval), offset = _tokens(data, 4)
    if magic != b"P5" or int(maxval) > 255:
        raise ValueError(f"{path}: only 8-bit binary PGM (P5) is supported")
    W, H = int(w), int(h)
    pixels = np.frombuffer(data, dtype=np.uint8, count=W * H, offset=offset)
    return pixels.reshape(H, W).copy()


def write_field(path, field) -> None:
    write_pgm(path, validate_field(field))


def read_field(path) -> np.ndarray:
    return read_pgm(path).astype(np.int64)


def write_stack(directory, stack) -> None:
    """One ``comp_<i>.pgm`` per component, 0-based ``i``."""
    stack = validate_stack(stack)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, comp in enumerate(stack):
        write_pgm(directory / f"comp_{i}.pgm", np.rint(comp * 255.0))


def read_stack(directory, M: int) -> np.ndarray:
    directory = Path(directory)
    return np.stack([read_pgm(directory / f"comp_{i}.pgm") / 255.0 for i in range(M)])

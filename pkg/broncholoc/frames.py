"""
frames.py

Frame-file I/O. Sequences arrive as directories of zero-padded numbered
PGM (P5) or PNG files, e.g. frame_000000.pgm, frame_000001.pgm, ...

"""
import logging
import re
from pathlib import Path
from typing import Iterator, List, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageError
from .imaging import GrayImage, to_grayscale

logger = logging.getLogger(__name__)

FRAME_PATTERN = re.compile(r'^(?P<prefix>.*?)(?P<number>\d+)\.(?P<ext>pgm|png)$',
                           re.IGNORECASE)
FRAME_DIGITS = 6


def frame_name(index: int, ext: str = 'pgm', prefix: str = 'frame_') -> str:
    return '{0}{1:0{2}d}.{3}'.format(prefix, index, FRAME_DIGITS, ext)


def read_frame(path) -> GrayImage:
    """
    Reads an 8-bit gray or colour frame. Colour frames go through the
    luma conversion in `imaging.to_grayscale`.
    """
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode == 'L':
                return GrayImage(np.asarray(img))
            if mode in ('RGB', 'RGBA', 'P', 'LA'):
                return to_grayscale(np.asarray(img.convert('RGB')))
    except (OSError, UnidentifiedImageError) as exc:
        raise ImageError(ImageError.UNREADABLE, '{0}: {1}'.format(path, exc))
    raise ImageError(ImageError.UNREADABLE,
                     '{0}: unsupported mode {1}'.format(path, mode))


def write_frame(path, image) -> None:
    """Writes a GrayImage (or raw uint8 array) as PGM or PNG by extension."""
    data = image.data if hasattr(image, 'data') else np.asarray(image)
    Image.fromarray(np.asarray(data, dtype=np.uint8)).save(str(path))


def list_frames(directory) -> List[Path]:
    """Frame files in `directory` ordered by their numeric suffix."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ImageError(ImageError.NO_FRAMES, '{0} is not a directory'
                         .format(directory))
    found = []
    for path in directory.iterdir():
        match = FRAME_PATTERN.match(path.name)
        if match and path.is_file():
            found.append((int(match.group('number')), path.name, path))
    if not found:
        raise ImageError(ImageError.NO_FRAMES, str(directory))
    return [path for _, _, path in sorted(found)]


def iter_frames(directory) -> Iterator[Tuple[int, Path, GrayImage]]:
    """Lazily yields (position, path, image); each frame is read on demand."""
    for t, path in enumerate(list_frames(directory)):
        logger.debug('reading frame %d from %s', t, path)
        yield t, path, read_frame(path)

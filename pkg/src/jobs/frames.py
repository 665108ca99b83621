"""
Frame selection for captured sequences: keep the sharpest frame of each window.
"""

from pathlib import Path
from typing import List, Optional, Sequence

from src.scene.sharpness import select_sharpest
from src.utils.logging_setup import get_pipeline_logger
from src.utils.storage import load_image

FRAME_SUFFIXES = (".png", ".ppm")


def list_frames(directory: Path) -> List[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"frame directory {directory} does not exist")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)


def select_frames_job(frames: Sequence[Path], window: int, output: Optional[Path] = None) -> List[Path]:
    """
    Pick the sharpest frame in each consecutive window of `window` frames.

    Args:
        frames: Frame paths in capture order
        window: Frames per window; a partial trailing window is dropped
        output: Optional text file receiving one selected path per line

    Returns:
        Selected frame paths
    """
    logger = get_pipeline_logger("select_frames")
    images = [load_image(path) for path in frames]
    selected = [frames[i] for i in select_sharpest(images, window)]
    if output is not None:
        Path(output).parent.mkdir(parents=True, exist_ok=True)
        Path(output).write_text("".join(f"{path}\n" for path in selected))
    logger.info("Selected frames", frames=len(frames), window=window, selected=len(selected))
    return selected

import json

import numpy as np
import pytest

from _synth import make_vocab, make_world
from regionadapt import write_detections, write_image_metas
from regionadapt.evaluation import write_ground_truth


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the one-line acceptance verdicts after the run."""
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def vocab():
    """Four base and two novel classes."""
    return make_vocab(4, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_world(vocab):
    """Twenty training images, base objects only, every detection retained."""
    return make_world(7, vocab, n_images=20, objects_per_image=3, novel_share=0.0)


@pytest.fixture
def eval_world(vocab):
    """Held-out scenes mixing base and novel objects."""
    return make_world(8, vocab, n_images=15, objects_per_image=3,
                      novel_share=0.4, prefix="eval")


@pytest.fixture
def world_files(tmp_path, vocab, small_world, eval_world):
    """The fixture worlds written out in the CLI's file formats."""
    paths = {
        "detections": tmp_path / "detections.json",
        "images": tmp_path / "images.json",
        "vocab": tmp_path / "vocab.json",
        "proposals": tmp_path / "proposals.json",
        "ground_truth": tmp_path / "gt.json",
        "train_ground_truth": tmp_path / "train_gt.json",
    }
    paths["vocab"].write_text(json.dumps(vocab.to_dict()))
    write_detections(small_world.detections, vocab, paths["detections"])
    write_image_metas(small_world.images, paths["images"])
    write_detections(eval_world.proposals, vocab, paths["proposals"])
    write_ground_truth(eval_world.gts, vocab, paths["ground_truth"])
    write_ground_truth(small_world.gts, vocab, paths["train_ground_truth"])
    return paths

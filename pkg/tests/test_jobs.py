"""
Tests for the pipeline jobs on a tiny run directory: scene generation, sparse simulation,
prior export, frame selection and the experiment tables.
"""

from dataclasses import replace

import numpy as np
import pytest
import yaml

from src.jobs import sweep
from src.jobs.frames import list_frames, select_frames_job
from src.jobs.priors import export_priors_job, sparse_priors, train_completion_job
from src.jobs.simulate import NOISE_FILE, generate_scene_job, load_noise_model, simulate_sparse_job
from src.jobs.sweep import COMPLETED_TAG, SPARSE_ONLY_TAG, ablation_study, density_sweep, prior_tag_for
from src.sparse.noise import NoiseModel
from src.utils.storage import ArtifactStore, save_image
from tests.test_helpers import tiny_settings


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    """Scene, sparse maps and a one-epoch completion network in a fresh run directory."""
    settings = tiny_settings(train={"iterations": 2}, evaluation={"densities": (0.1, 0.05)})
    store = ArtifactStore(tmp_path_factory.mktemp("run"))
    generate_scene_job(settings, store)
    simulate_sparse_job(settings, store)
    train_completion_job(settings, store)
    return settings, store


def test_generate_and_simulate_write_artifacts(tiny_run):
    settings, store = tiny_run
    dataset = store.load_dataset()
    assert len(dataset.train) == 4 and len(dataset.test) == 2
    overlap = yaml.safe_load(store.path("overlap.yaml").read_text())
    assert abs(overlap["seen_by_none"] + overlap["seen_by_one"] + overlap["seen_by_many"] - 1.0) < 1e-9

    sparse = store.load_sparse("sfm", 4)
    assert sparse.shape == (4, 12, 16) and (sparse > 0).any()
    assert (store.path("sparse", "sfm", NOISE_FILE)).exists()
    assert load_noise_model(store, "sfm").as_tuple() == settings.sparse.noise_coefficients
    assert (store.completion_dir / "params.bin").exists()


def test_export_priors_modes(tiny_run):
    settings, store = tiny_run
    row = export_priors_job(settings, store, "sfm", "tiny_completed", mode="completion")
    assert set(row) >= {"tag", "pixels", "dense_rmse", "coverage_1"}
    depths, stds = store.load_priors("tiny_completed", 4)
    assert np.all(depths > 0) and np.all(stds >= settings.completion.s_min - 1e-6)

    export_priors_job(settings, store, "sfm", "tiny_sparse", mode="sparse")
    depths, stds = store.load_priors("tiny_sparse", 4)
    np.testing.assert_array_equal(depths > 0, store.load_sparse("sfm", 4) > 0)
    assert np.all(stds[depths > 0] > 0) and np.all(stds[depths == 0] == 0)

    with pytest.raises(ValueError, match="unknown mode"):
        export_priors_job(settings, store, "sfm", "x", mode="monocular")
    with pytest.raises(FileNotFoundError, match="simulate-sparse"):
        export_priors_job(settings, store, "missing", "x")


def test_sparse_priors_pass_through():
    sparse = np.array([[0.0, 2.0], [1.0, 0.0]])
    depth, std = sparse_priors(sparse, NoiseModel(0.01, 0.02, 0.0).sigma)
    np.testing.assert_array_equal(depth, sparse)
    np.testing.assert_allclose(std, [[0.0, 0.05], [0.03, 0.0]])


def test_prior_tags_per_variant():
    assert prior_tag_for("no_completion") == SPARSE_ONLY_TAG
    assert prior_tag_for("none") == prior_tag_for("no_gnll") == COMPLETED_TAG


def test_ablation_study_table(tiny_run):
    settings, store = tiny_run
    table = ablation_study(settings, store, ["none", "no_completion"], optimize_codes=False)
    assert list(table["method"]) == ["none", "no_completion"]
    assert list(table.columns) == [
        "method", "psnr", "psnr_opt_code", "ssim", "depth_rmse", "seam_variance", "train_seam_variance",
    ]
    assert (table["train_seam_variance"] >= 0).all()
    assert store.path("ablation.csv").exists()
    assert (store.nerf_dir("no_completion") / "params.bin").exists()
    with pytest.raises(ValueError, match="unknown variants"):
        ablation_study(settings, store, ["none", "monocular"])


def test_variants_render_with_evaluation_sample_count(tiny_run, monkeypatch):
    """Training keeps its own sample count; every evaluation render uses the evaluation one."""
    settings, store = tiny_run
    settings = replace(settings, evaluation=replace(settings.evaluation, samples_per_ray=8))
    export_priors_job(settings, store, "sfm", COMPLETED_TAG, mode="completion")
    counts = []

    def recording(real):
        def wrapper(*args, **kwargs):
            counts.append(args[3])
            return real(*args, **kwargs)
        return wrapper

    monkeypatch.setattr(sweep, "evaluate_views", recording(sweep.evaluate_views))
    monkeypatch.setattr(sweep, "training_seam_variance", recording(sweep.training_seam_variance))
    row = sweep.run_variant(settings, store, "eval_samples", "none", COMPLETED_TAG, optimize_codes=False)
    assert counts == [8, 8]
    assert settings.train.samples_per_ray == 16 and "train_seam_variance" in row


def test_density_sweep_rows(tiny_run):
    settings, store = tiny_run
    table = density_sweep(settings, store, include_sparse_baseline=True)
    assert list(table["density"]) == [0.1, 0.05, 0.1]
    assert list(table["method"]) == ["none", "none", "no_completion"]
    assert store.path("density_sweep.csv").exists()


def test_select_frames_job(tmp_path):
    rng = np.random.default_rng(0)
    sharp = rng.uniform(size=(16, 16, 3))
    flat = np.full((16, 16, 3), 0.5)
    frames_dir = tmp_path / "frames"
    for index, image in enumerate([flat, sharp, flat, flat, sharp]):
        save_image(frames_dir / f"frame_{index:02d}.png", image)

    frames = list_frames(frames_dir)
    assert len(frames) == 5
    selected = select_frames_job(frames, 2, tmp_path / "selected.txt")
    # ties go to the earliest frame; the partial last window is dropped
    assert [p.name for p in selected] == ["frame_01.png", "frame_02.png"]
    assert (tmp_path / "selected.txt").read_text().splitlines() == [str(p) for p in selected]

    with pytest.raises(FileNotFoundError):
        list_frames(tmp_path / "absent")

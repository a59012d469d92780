import pytest

from pulseprop.pipeline import PipelineConfig, run_pipeline
from pulseprop.rebalance import ResampleSpec
from pulseprop.synth import SynthSpec


def small_config(output_dir, seed=3):
    """A fast two-kind synthetic configuration shared by pipeline tests.

    Random oversampling instead of smote keeps the minority-size
    precondition out of the way at this corpus size.
    """
    return PipelineConfig(
        output_dir=str(output_dir),
        synth=SynthSpec(
            duration_s=200.0,
            seed=11,
            artifact_kinds=("amplitude_spike", "baseline_jump"),
        ),
        seed=seed,
        resample_lp=ResampleSpec(method="ros"),
        resample_baselines=ResampleSpec(method="ros"),
    )


@pytest.fixture(scope="session")
def completed_run(tmp_path_factory):
    config = small_config(tmp_path_factory.mktemp("run"))
    reports = run_pipeline(config)
    return config, reports

import numpy as np
import pytest

from gupsim import IntegratorConfig, NoiseSettings, simulate, slow_amplitudes
from gupsim.container import (
    read_slow_series,
    read_trajectory,
    write_slow_series,
    write_trajectory,
)
from gupsim.errors import ConfigError


@pytest.fixture
def small_traj(desk_params):
    cfg = IntegratorConfig(dt=0.02, t_total=400.0, t_discard=100.0, record_stride=7)
    return simulate(desk_params, cfg, NoiseSettings(seed=21))


class TestTrajectoryContainer:
    def test_round_trip_bit_exact(self, small_traj, tmp_path):
        path = tmp_path / "traj.omg"
        write_trajectory(path, small_traj)
        back = read_trajectory(path)
        assert np.array_equal(back.times, small_traj.times)
        assert np.array_equal(back.a, small_traj.a)
        assert np.array_equal(back.b1, small_traj.b1)
        assert np.array_equal(back.b2, small_traj.b2)
        assert back.params == small_traj.params
        assert back.noise.seed == small_traj.noise.seed
        assert back.config.dt == small_traj.config.dt

    def test_magic_bytes(self, small_traj, tmp_path):
        path = tmp_path / "traj.omg"
        write_trajectory(path, small_traj)
        assert path.read_bytes()[:4] == b"OMG1"

    def test_wrong_magic_rejected(self, small_traj, tmp_path):
        path = tmp_path / "traj.omg"
        write_trajectory(path, small_traj)
        with pytest.raises(ConfigError, match="magic"):
            read_slow_series(path)

    def test_csv_export(self, small_traj, tmp_path):
        path = tmp_path / "traj.csv"
        small_traj.to_csv(path)
        lines = path.read_text().strip().splitlines()
        header = lines[0].split(",")
        assert header[0].startswith("t ")
        assert "a_re" in header and "b2_im" in header
        assert len(lines) == 1 + len(small_traj.times)
        first = [float(v) for v in lines[1].split(",")]
        assert first[0] == pytest.approx(small_traj.times[0])


class TestSlowSeriesContainer:
    def test_round_trip(self, small_traj, tmp_path):
        slow = slow_amplitudes(small_traj)
        path = tmp_path / "slow.omg"
        write_slow_series(path, slow)
        assert path.read_bytes()[:4] == b"OMG2"
        back = read_slow_series(path)
        assert np.array_equal(back.ab, slow.ab)
        assert np.array_equal(back.ad, slow.ad)
        assert back.beta_offset1 == slow.beta_offset1
        assert back.frame_freq == slow.frame_freq
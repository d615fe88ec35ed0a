import numpy as np
import pytest

from geobudget.config import ConfigError
from geobudget.engines import GeneratorManager, load_points_csv
from geobudget.utils import make_rng


@pytest.fixture(scope="module")
def manager():
    return GeneratorManager()


def test_bundled_generators(manager):
    assert manager.get_available_generators() == ["mixture", "ring", "uniform", "walk"]


@pytest.mark.parametrize("name,params", [
    ("uniform", {"low": -2.0, "high": 2.0}),
    ("mixture", {"components": 4, "spread": 50.0}),
    ("ring", {"radius": 10.0}),
    ("walk", {"steps": 10}),
])
def test_generators_return_points(manager, name, params):
    points = manager.gen_data({"generator": name, "params": params}, 120, 2, make_rng(0))
    assert points.shape == (120, 2)
    assert np.all(np.isfinite(points))


def test_generators_are_seeded(manager):
    spec = {"generator": "mixture", "params": {}}
    assert np.array_equal(manager.gen_data(spec, 30, 2, make_rng(5, 1)), manager.gen_data(spec, 30, 2, make_rng(5, 1)))


def test_walk_stays_in_box(manager):
    points = manager.gen_data({"generator": "walk", "params": {"step_scale": 0.5}}, 500, 3, make_rng(2))
    assert points.min() >= 0.0 and points.max() <= 1.0


def test_unknown_generator_and_bad_params(manager):
    with pytest.raises(ConfigError):
        manager.gen_data({"generator": "spiral"}, 10, 2, make_rng(0))
    with pytest.raises(ConfigError):
        manager.gen_data({"generator": "uniform", "params": {"radius": 3}}, 10, 2, make_rng(0))


def test_trajectory(manager):
    still = manager.gen_trajectory({"generator": "uniform"}, 20, 2, 4, make_rng(1))
    assert still.shape == (4, 20, 2)
    assert all(np.array_equal(still[0], frame) for frame in still)

    moving = manager.gen_trajectory({"generator": "uniform", "drift": 0.1}, 20, 2, 4, make_rng(1))
    assert np.array_equal(moving[0], still[0])
    assert not np.array_equal(moving[1], moving[0])


def test_csv_points(tmp_path, manager):
    path = tmp_path / "points.csv"
    path.write_text("x1,x2\n0.5,1.5\n-2,3\n")
    points = manager.gen_data({"csv": str(path)}, 2, 2, make_rng(0))
    assert points.tolist() == [[0.5, 1.5], [-2.0, 3.0]]
    with pytest.raises(ConfigError):
        load_points_csv(path, 3)


@pytest.mark.parametrize("content", ["", "a,b\n1,2\n", "x1,x2\n1,oops\n", "x1,x2\n1,2,3\n"])
def test_bad_csv(tmp_path, content):
    path = tmp_path / "points.csv"
    path.write_text(content)
    with pytest.raises(ConfigError):
        load_points_csv(path)


def test_missing_csv(tmp_path):
    with pytest.raises(ConfigError):
        load_points_csv(tmp_path / "absent.csv")


def test_custom_plugin_directory(tmp_path):
    (tmp_path / "gen_line.py").write_text(
        "import numpy as np\n\n\ndef gen_line(n, d, rng):\n    return np.zeros((n, d))\n"
    )
    manager = GeneratorManager(tmp_path)
    assert manager.get_available_generators() == ["line"]
    assert manager.gen_data({"generator": "line"}, 3, 2, make_rng(0)).shape == (3, 2)


def test_empty_plugin_directory(tmp_path):
    with pytest.raises(RuntimeError):
        GeneratorManager(tmp_path)

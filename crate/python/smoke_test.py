"""Smoke test for the Python bindings.

Build the extension first:

    cargo build --release -p quantum-otto-py --features extension-module

then run this script from the repository root. It looks for the compiled
library in target/release unless QUANTUM_OTTO_LIB points at it.
"""

import importlib.machinery
import importlib.util
import math
import os
import pathlib
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    default = ROOT / "target" / "release" / "libquantum_otto_py.so"
    path = pathlib.Path(os.environ.get("QUANTUM_OTTO_LIB", default))
    loader = importlib.machinery.ExtensionFileLoader("quantum_otto_py", str(path))
    spec = importlib.util.spec_from_file_location("quantum_otto_py", path, loader=loader)
    module = importlib.util.module_from_spec(spec)
    loader.exec_module(module)
    return module


def main():
    qo = load()

    params = qo.EngineParams()
    schedule = qo.Schedule()
    assert math.isclose(schedule.total(), 2.10998, rel_tol=1e-12)

    bare = qo.evaluate_cycle(params, schedule)
    assert bare["Q_h"] > 0 > bare["Q_c"]
    assert abs(bare["W_net"] + bare["Q_h"] + bare["Q_c"]) < 1e-10
    lubed = qo.evaluate_cycle(params.with_lambdas(0.64, 1.28), schedule)
    assert lubed["P"] > bare["P"] and lubed["dS"] < bare["dS"]
    print(f"P {bare['P']:.5f} -> {lubed['P']:.5f} with dephasing on the adiabats")

    record = qo.run_cycle(params, schedule, resolution=50)
    assert len(record["t"]) == 4 * 50 + 1
    assert all(se >= sv - 1e-10 for se, sv in zip(record["S_E"], record["S_vn"]))

    b = qo.limit_cycle(params, schedule)
    assert len(b) == 5

    sigma = qo.sigma_for_lambda(0.64, 0.0069)
    assert abs(sigma - 0.006645299) < 1e-8

    mean, se = qo.monte_carlo(params.with_lambdas(0.64, 1.28), schedule, n_cycles=500, seed=1)
    assert abs(mean["P"] - lubed["P"]) < 4 * se["P"] + 2e-3
    print(f"Monte Carlo P {mean['P']:.5f} +- {se['P']:.5f}")

    rows = qo.dephasing_sweep(params, schedule, [0.0, 0.64], mode="lindblad")
    assert math.isclose(rows[1]["P"], lubed["P"], rel_tol=1e-3)

    best, power = qo.optimize_allocations(params, 2.10998)
    assert power >= bare["P"]
    print(f"optimum {best} P {power:.5f}")

    try:
        qo.EngineParams(t_c=9.0).validate()
    except ValueError as e:
        assert "cold bath hotter" in str(e)
    else:
        raise AssertionError("reversed baths accepted")

    text = (ROOT / "crates" / "core" / "configs" / "fig1.cfg").read_text()
    with tempfile.TemporaryDirectory() as out:
        files = qo.run_config(text, out)
        assert "cycle.csv" in files and (pathlib.Path(out) / "manifest.json").exists()
    try:
        qo.run_config(text.replace("T_h = 7.5\n", ""), "unused")
    except qo.ConfigError as e:
        assert "T_h" in str(e)
    else:
        raise AssertionError("missing key accepted")

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())

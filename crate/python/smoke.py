"""Smoke test for the dfplan_py extension.

Usage: python3 python/smoke.py [path/to/libdfplan_py.so]
"""

import importlib.util
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load(lib):
    tmp = tempfile.mkdtemp()
    dst = os.path.join(tmp, "dfplan_py.so")
    shutil.copy(lib, dst)
    spec = importlib.util.spec_from_file_location("dfplan_py", dst)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def main():
    lib = sys.argv[1] if len(sys.argv) > 1 else os.path.join(ROOT, "target", "release", "libdfplan_py.so")
    dp = load(lib)

    hw = dp.sample_hardware("mesh4x8")
    assert hw.num_cores == 32, hw.num_cores
    assert not [d for d in hw.validate() if d[0] == "error"]

    k = dp.gemm(256, 256, 256, bm=64, bn=64, bk=64)
    assert k.grid_size == 16
    assert dp.parse_kernel(str(k)).grid_size == 16

    r = dp.compile(hw, gemm=(256, 256, 256), topk=2)
    assert r.num_candidates > 0
    best = r.winner
    sim = dp.simulate(hw, best)
    assert sim.makespan == r.winner_sim.makespan
    assert dp.estimate(hw, best) == best.model_cycles
    assert sim.dram_write_bytes == 256 * 256 * 2

    assert dp.loop_time(1, 3, 5, 7) == 15
    try:
        dp.compile(hw)
    except ValueError:
        pass
    else:
        raise AssertionError("compile without a workload should fail")

    print(f"ok: {r.num_candidates} candidates, winner {best.mapping} rank {r.winner_rank}, "
          f"model {best.model_cycles} sim {sim.makespan}")


if __name__ == "__main__":
    main()

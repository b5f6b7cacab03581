"""Time the event-loop kernel with numba and with the pure-Python fallback.

Each path runs in its own interpreter because the fallback is chosen at import
time through CACLAB_DISABLE_NUMBA. Both paths must report identical counts.

    python benchmarks/bench_kernels.py --arrivals 200000
"""
import argparse
import json
import os
import subprocess
import sys
import time


def child(arrivals: int, repeats: int) -> None:
    from caclab import _accel
    from caclab.fncac import FeatureMap, FncacController
    from caclab.policies import ConventionalPolicy, FuzzyPolicy
    from caclab.rrbfn import RrbfnConfig, init_model
    from caclab.simulator import SimConfig, run
    from caclab.traffic import build_normalized_scenario

    scenario = build_normalized_scenario(0.7, 50)
    cfg = SimConfig(arrivals, seed=1)
    result = {"numba": _accel.NUMBA_ENABLED, "timings": {}, "counts": {}}
    # an untrained network costs the same per decision as a trained one
    fmap = FeatureMap.default(50)
    net = FncacController(init_model(RrbfnConfig(input_size=fmap.arity, hidden_sizes=(16, 16)), seed=0), fmap)
    for policy in (ConventionalPolicy(), FuzzyPolicy(), net.policy(0.7)):
        run(scenario, policy, SimConfig(1000, seed=1))  # compile / warm caches
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            m = run(scenario, policy, cfg)
            best = min(best, time.perf_counter() - t0)
        result["timings"][policy.name] = best
        result["counts"][policy.name] = [m.offered.tolist(), m.blocked.tolist()]
    print(json.dumps(result))


def launch(disable: bool, arrivals: int, repeats: int) -> dict:
    env = dict(os.environ)
    env.pop("CACLAB_DISABLE_NUMBA", None)
    if disable:
        env["CACLAB_DISABLE_NUMBA"] = "1"
    cmd = [sys.executable, __file__, "--child", "--arrivals", str(arrivals), "--repeats", str(repeats)]
    out = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--arrivals", type=int, default=100_000)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = p.parse_args()
    if args.child:
        child(args.arrivals, args.repeats)
        return 0
    fast = launch(False, args.arrivals, args.repeats)
    slow = launch(True, args.arrivals, 1)
    print(f"arrivals per run: {args.arrivals}  (numba available: {fast['numba']})")
    print(f"{'policy':<14}{'numba [s]':>12}{'python [s]':>12}{'speedup':>10}  counts equal")
    for name, t_fast in fast["timings"].items():
        t_slow = slow["timings"][name]
        same = fast["counts"][name] == slow["counts"][name]
        print(f"{name:<14}{t_fast:>12.4f}{t_slow:>12.4f}{t_slow / t_fast:>9.1f}x  {same}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

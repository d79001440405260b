#!/usr/bin/env python3
"""Smoke test for the urllc_lab_py extension module.

Builds nothing itself: expects `cargo build -p urllc-lab-py` to have produced
target/debug/liburllc_lab_py.so (or target/release/). The library is staged
into a temp directory under the importable name urllc_lab_py.so.

Run from the repository root (or anywhere inside it):

    cargo build -p urllc-lab-py
    python3 python/smoke_test.py
"""

import csv
import math
import os
import shutil
import sys
import tempfile

CSV_HEADER = (
    "preset,sweep_var,sweep_value,metric,k,payload_bytes,theta,link,"
    "collaboration,mode,fading,analytic_kind,analytic,analytic_matched,"
    "sim_estimate,sim_std_error,trials,events,terminated_by,config_hash"
)

_checks = 0


def check(cond, label):
    global _checks
    _checks += 1
    if not cond:
        raise AssertionError(f"FAILED: {label}")
    print(f"  ok: {label}")


def repo_root():
    here = os.path.dirname(os.path.abspath(__file__))
    for cand in (os.path.dirname(here), here, os.getcwd()):
        if os.path.exists(os.path.join(cand, "Cargo.toml")):
            return cand
    raise SystemExit("could not locate the repository root")


def import_module(staging_dir):
    root = repo_root()
    candidates = [
        os.path.join(root, "target", profile, name)
        for profile in ("debug", "release")
        for name in ("liburllc_lab_py.so", "urllc_lab_py.so", "liburllc_lab_py.dylib")
    ]
    built = next((p for p in candidates if os.path.exists(p)), None)
    if built is None:
        raise SystemExit(
            "extension not found; run `cargo build -p urllc-lab-py` first"
        )
    staged = os.path.join(staging_dir, "urllc_lab_py.so")
    try:
        os.symlink(built, staged)
    except OSError:
        shutil.copy2(built, staged)
    sys.path.insert(0, staging_dir)
    import urllc_lab_py

    return urllc_lab_py


def main():
    tmp = tempfile.mkdtemp(prefix="urllc-lab-smoke-")
    lab = import_module(tmp)
    print(f"imported urllc_lab_py from {tmp}")

    # --- short-packet thresholds ---------------------------------------
    th32 = lab.Packet().sir_threshold()
    th8 = lab.Packet(payload_bytes=8.0).sir_threshold()
    check(abs(th32 - 0.420603) < 1e-4, f"32-byte SIR threshold {th32:.6f}")
    check(abs(th8 - 0.243584) < 1e-4, f"8-byte SIR threshold {th8:.6f}")
    check(lab.Packet().blocklength == 1000.0, "blocklength = duration x bandwidth")

    # --- network geometry ----------------------------------------------
    net = lab.Network()  # 125 users/km^2, K = 4, unit biases
    check(net.tiers == 2 and net.cell_size == 4, "two-tier default network")
    check(abs(net.lambda_tilde - 251.0) < 1e-9, "unit-bias effective density 251/km^2")
    dl = net.with_power_biases()
    expect = math.sqrt(20.0) + math.sqrt(5.0) * 250.0
    check(abs(dl.lambda_tilde - expect) < 1e-9, "power-bias effective density")
    check(net.mean_load(1) > 0.0, "mean load positive")

    # --- analytic outage: monotone in cell size ------------------------
    outages = [
        lab.uplink_outage(lab.Network(cell_size=k), th32) for k in range(1, 6)
    ]
    check(
        all(a > b for a, b in zip(outages, outages[1:])),
        f"uplink outage decreasing in K: {['%.3e' % o for o in outages]}",
    )
    limit = lab.reliability_limit(net, th32, link="uplink")
    check(0.0 < limit <= 1.0, f"dense-cooperation uplink limit {limit:.6f}")
    check(
        1.0 - outages[-1] <= limit + 1e-12,
        "finite-K reliability below the dense limit",
    )

    # --- Monte Carlo: determinism and bound consistency ----------------
    kwargs = dict(
        collaboration="collaborative",
        seed=123,
        target_events=150,
        max_trials=300_000,
    )
    a = lab.simulate_uplink(net, 1.0, **kwargs)
    b = lab.simulate_uplink(net, 1.0, **kwargs)
    check(a == b, "same seed, same estimate (bit-for-bit)")
    c = lab.simulate_uplink(net, 1.0, **{**kwargs, "seed": 124})
    check(a["outage"] != c["outage"], "different seed, different estimate")
    bound = lab.uplink_collab_bound(net, 1.0)
    check(
        bound >= (1.0 - a["outage"]) - 3.0 * a["std_error"],
        f"collaborative bound {bound:.4f} covers MC reliability "
        f"{1.0 - a['outage']:.4f} +/- {a['std_error']:.1e}",
    )
    check(a["terminated_by"] in ("events", "trial-cap"), "termination reason tagged")

    d = lab.simulate_downlink(net.with_power_biases(), 10.0, seed=5,
                              target_events=100, max_trials=100_000)
    db = lab.downlink_bound(net.with_power_biases(), 10.0)
    check(
        db >= d["reliability"] - 3.0 * d["std_error"],
        f"downlink bound {db:.4f} covers MC reliability {d['reliability']:.4f}",
    )

    # --- delay model ----------------------------------------------------
    ul_ms, dl_ms = lab.mean_delay_ms(net, th32, collaborative=False)
    check(ul_ms > 0.0 and dl_ms > 0.0, f"mean delays {ul_ms:.3f}/{dl_ms:.3f} ms")
    sim = lab.simulate_round_trip_delay(
        net, th32, collaborative=False, budget_ms=0.5,
        seed=9, target_events=300, max_trials=100_000,
    )
    rel_gap = abs(sim["mean_ms"] - (ul_ms + dl_ms)) / (ul_ms + dl_ms)
    check(
        rel_gap < 0.05,
        f"simulated round trip {sim['mean_ms']:.3f} ms within 5% of analytic "
        f"{ul_ms + dl_ms:.3f} ms",
    )

    # --- load histograms and zeta fitting -------------------------------
    small = lab.Network(user_density_per_km2=50.0, cell_size=2)
    hists = lab.load_histograms(small, realizations=120, seed=7)
    check(len(hists) == 2 and sum(hists[1]) >= 1000, "dense-tier histogram populated")
    zeta, tv = lab.fit_zeta(hists[1], small.mean_load(1))
    check(zeta > 0.0 and tv < 0.05, f"fitted zeta {zeta:.2f}, TV distance {tv:.4f}")
    table = lab.ZetaTable.fitted(small, realizations=120, seed=7)
    check(len(table) == 4, "fitted table covers both bias views x both tiers")
    with_fit = lab.uplink_outage(small, th32, table=table)
    check(0.0 < with_fit < 1.0, f"outage under fitted table {with_fit:.3e}")

    # --- preset sweep ----------------------------------------------------
    names = lab.preset_names()
    check("fig2" in names and "fig9a" in names and len(names) >= 8,
          f"{len(names)} presets catalogued")
    out = os.path.join(tmp, "fig9a.csv")
    run = lab.run_preset("fig9a", out, workers=2, seed=11,
                         target_events=25, max_trials=5_000)
    check(run["rows"] > 0 and os.path.exists(out),
          f"preset wrote {run['rows']} rows in {run['wall_ms']} ms")
    with open(out, newline="") as f:
        lines = f.read().splitlines()
    check(lines[0] == CSV_HEADER, "CSV header matches the published schema")
    reader = csv.DictReader(lines)
    hashes = {row["config_hash"] for row in reader}
    check(len(hashes) == 1, "single config hash per sweep file")

    # --- error mapping ----------------------------------------------------
    try:
        lab.Network(user_density_per_km2=-5.0)
        raise AssertionError("negative density accepted")
    except ValueError:
        check(True, "invalid config raises ValueError")
    try:
        lab.simulate_uplink(net, 1.0, mode="bogus")
        raise AssertionError("bogus mode accepted")
    except ValueError:
        check(True, "unknown mode raises ValueError")
    try:
        lab.ZetaTable.from_csv(os.path.join(tmp, "missing.csv"))
        raise AssertionError("missing table accepted")
    except OSError:
        check(True, "missing table file raises OSError")

    shutil.rmtree(tmp, ignore_errors=True)
    print(f"\nsmoke test passed ({_checks} checks)")


if __name__ == "__main__":
    main()

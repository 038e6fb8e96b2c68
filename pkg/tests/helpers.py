import numpy as np

from glovecal import calibration as cal
from glovecal import glove_sim as gs
from glovecal.hand_model import link_rotations


def virtual_refs(model, kinds=gs.REFERENCE_KINDS):
    out = {}
    for k in kinds:
        pose = gs.reference_pose(model, k)
        out[k] = link_rotations(model, pose.root_rotation, pose.joint_rotations)
    return out


def simulate_captures(model, seed, noise=None, beta=None, include_pinches=True, extrinsics=None):
    """Simulated calibration session reduced to per-segment captures."""
    rng = np.random.default_rng(seed)
    traj = gs.calibration_trajectory(model, beta=beta, seed=seed, include_pinches=include_pinches)
    extr = extrinsics if extrinsics is not None else gs.SensorExtrinsics.random(rng)
    noise = noise if noise is not None else gs.NoiseModel.noiseless(seed)
    imu = gs.synthesize_imu(traj, extr, noise, model)
    rot = imu.rotations()
    caps = {s.kind: cal.ReferenceCapture.from_samples(s.kind, rot[s.start:s.stop]) for s in traj.segments}
    return traj, extr, imu, caps


def random_sample(rng):
    from glovecal.acquisition import protocol as proto

    kind = int(rng.integers(4))
    ts = int(rng.integers(0, 2**63))
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    if kind == 0:
        return proto.ImuSample(int(rng.integers(16)), ts, q, rng.normal(0, 5, 3), rng.normal(0, 20, 3))
    if kind == 1:
        return proto.DorsalSample(ts, q, rng.normal(0, 500, 3))
    if kind == 2:
        t = np.sort(rng.integers(0, 2**62, 4))
        return proto.ClockProbe(int(rng.integers(256)), *t)
    return proto.SegmentMarker(int(rng.integers(256)), ts)


def jittered_streams(rng, n_streams, n_ticks, period=10_000_000, jitter=2_000_000, start=1_000_000_000):
    ticks = start + period * np.arange(n_ticks)
    return [(ticks + rng.integers(-jitter, jitter + 1, n_ticks)).tolist() for _ in range(n_streams)]


def periodic_micro_case(rng, period=10, jitter=2):
    streams = []
    for _ in range(int(rng.integers(2, 4))):
        first = int(rng.integers(0, 3))
        n = int(rng.integers(1, 9))
        streams.append([period * k + int(rng.integers(-jitter, jitter + 1)) for k in range(first, first + n)])
    return streams


def run_sync(streams, window):
    from glovecal.acquisition.sync import SyncPolicy, synchronize

    frames, stats = synchronize([[(t, (s, k)) for k, t in enumerate(st)] for s, st in enumerate(streams)],
                                SyncPolicy(window_ns=window, use_dorsal=False), n_required=len(streams))
    return frames, stats

"""Error-state extended Kalman filter for loosely coupled GNSS/IMU fusion.

Nominal state: position, velocity, orientation quaternion, accelerometer
bias, gyroscope bias. The 15-dimensional error state is ordered
(dp, dv, dtheta, dba, dbg) with the attitude error as a body-frame
rotation vector applied on the right of the nominal quaternion.

Prediction is a strapdown integration of the IMU; the update is a direct
position measurement (GNSS in ENU) with Joseph-form covariance and a
Mahalanobis gate against multipath spikes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NonFiniteInput, PreconditionError, SingularInnovation
from .geom import GRAVITY, quat_conjugate, quat_from_rotvec, quat_identity, \
    quat_multiply, quat_to_matrix, quat_to_rotvec, skew
from .sensors import FixQuality, GnssFix, ImuSample

GRAVITY_ENU = np.array([0.0, 0.0, -GRAVITY])


@dataclass
class NavState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=quat_identity)
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("position", "velocity", "accel_bias", "gyro_bias"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(3)
            if not np.all(np.isfinite(v)):
                raise NonFiniteInput(f"non-finite {name}")
            setattr(self, name, v)
        self.orientation = np.asarray(self.orientation, dtype=float).reshape(4)


@dataclass
class EkfStepTrace:
    kalman_gain: np.ndarray
    innovation: np.ndarray
    innovation_cov: np.ndarray
    mahalanobis: float


@dataclass
class EkfConfig:
    """Noise model. Densities are per sqrt(Hz); biases random-walk."""

    sigma_accel: float = 0.02      # m/s^2/sqrt(Hz)
    sigma_gyro: float = 0.001      # rad/s/sqrt(Hz)
    sigma_accel_bias: float = 1e-4
    sigma_gyro_bias: float = 1e-5
    sigma_gnss: dict = field(default_factory=lambda: {
        FixQuality.RTK_FIXED: 0.05,
        FixQuality.FLOAT: 0.5,
        FixQuality.NONE: 2.0,
    })
    mahalanobis_threshold: float = 3.0

    def gnss_noise(self, fix: GnssFix) -> np.ndarray:
        sigma = self.sigma_gnss[FixQuality(fix.fix_quality)] * fix.pdop
        return np.eye(3) * sigma * sigma


def initial_covariance(pos_sigma=2.0, vel_sigma=0.5, ang_sigma=0.05,
                       ba_sigma=0.1, bg_sigma=0.01) -> np.ndarray:
    d = np.concatenate([
        np.full(3, pos_sigma ** 2), np.full(3, vel_sigma ** 2),
        np.full(3, ang_sigma ** 2), np.full(3, ba_sigma ** 2),
        np.full(3, bg_sigma ** 2),
    ])
    return np.diag(d)


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


def ekf_predict(state: NavState, cov: np.ndarray, imu: ImuSample, dt: float,
                config: EkfConfig | None = None):
    """Strapdown propagation over dt using one IMU sample.

    Returns the predicted (state, covariance). dt must lie in (0, 0.1].
    """
    if not (0.0 < dt <= 0.1):
        raise PreconditionError(f"dt={dt} outside (0, 0.1]")
    if config is None:
        config = EkfConfig()
    if not (np.all(np.isfinite(imu.accel)) and np.all(np.isfinite(imu.gyro))):
        raise NonFiniteInput("non-finite IMU sample")

    r = quat_to_matrix(state.orientation)
    f = imu.accel - state.accel_bias
    omega = imu.gyro - state.gyro_bias

    a_world = r @ f + GRAVITY_ENU
    position = state.position + state.velocity * dt + 0.5 * a_world * dt * dt
    velocity = state.velocity + a_world * dt
    orientation = quat_multiply(state.orientation, quat_from_rotvec(omega * dt))

    # first-order error-state transition
    f_mat = np.eye(15)
    f_mat[0:3, 3:6] = np.eye(3) * dt
    f_mat[3:6, 6:9] = -r @ skew(f) * dt
    f_mat[3:6, 9:12] = -r * dt
    f_mat[6:9, 6:9] = quat_to_matrix(quat_from_rotvec(omega * dt)).T
    f_mat[6:9, 12:15] = -np.eye(3) * dt

    q_diag = np.concatenate([
        np.zeros(3),
        np.full(3, config.sigma_accel ** 2 * dt),
        np.full(3, config.sigma_gyro ** 2 * dt),
        np.full(3, config.sigma_accel_bias ** 2 * dt),
        np.full(3, config.sigma_gyro_bias ** 2 * dt),
    ])
    cov_new = _symmetrize(f_mat @ cov @ f_mat.T + np.diag(q_diag))

    return replace(
        state, position=position, velocity=velocity, orientation=orientation
    ), cov_new


def ekf_update(state: NavState, cov: np.ndarray, z_enu, r_gnss):
    """Position measurement update with Joseph-form covariance.

    Returns (state, covariance, EkfStepTrace). Gating is the caller's job:
    feed the trace to mahalanobis_gate and discard the result to skip.
    """
    z = np.asarray(z_enu, dtype=float).reshape(3)
    r_gnss = np.asarray(r_gnss, dtype=float).reshape(3, 3)
    innovation = z - state.position
    s = cov[0:3, 0:3] + r_gnss
    try:
        np.linalg.cholesky(_symmetrize(s))
    except np.linalg.LinAlgError as exc:
        raise SingularInnovation("innovation covariance not SPD") from exc
    s_inv_nu = np.linalg.solve(s, innovation)
    mahal = math.sqrt(max(0.0, float(innovation @ s_inv_nu)))

    k = np.linalg.solve(s, cov[0:3, :]).T      # P H^T S^-1, H = [I 0 ...]
    dx = k @ innovation

    new_state = replace(
        state,
        position=state.position + dx[0:3],
        velocity=state.velocity + dx[3:6],
        orientation=quat_multiply(state.orientation, quat_from_rotvec(dx[6:9])),
        accel_bias=state.accel_bias + dx[9:12],
        gyro_bias=state.gyro_bias + dx[12:15],
    )

    i_kh = np.eye(15)
    i_kh[:, 0:3] -= k
    cov_new = _symmetrize(i_kh @ cov @ i_kh.T + k @ r_gnss @ k.T)

    trace = EkfStepTrace(kalman_gain=k, innovation=innovation,
                         innovation_cov=_symmetrize(s), mahalanobis=mahal)
    return new_state, cov_new, trace


def mahalanobis_gate(trace: EkfStepTrace, threshold: float = 3.0) -> bool:
    """True when the innovation passes the chi gate and may be applied."""
    return trace.mahalanobis <= threshold


@dataclass
class FilterResult:
    stamps: np.ndarray
    states: list
    covariances: list
    rejected_fixes: list
    accepted_fixes: int


def _predict_span(state, cov, imu, dt, config):
    """Propagate over dt, sub-stepping so each chunk stays within 0.1 s."""
    n = max(1, int(math.ceil(dt / 0.1)))
    step = dt / n
    for _ in range(n):
        state, cov = ekf_predict(state, cov, imu, step, config)
    return state, cov


def run_gnss_imu_filter(
    imu_samples: list[ImuSample],
    gnss_enu: list[tuple[float, np.ndarray, np.ndarray]],
    init_state: NavState,
    init_cov: np.ndarray,
    config: EkfConfig | None = None,
):
    """Fold the filter over interleaved IMU and GNSS events.

    gnss_enu holds (stamp, position_enu, measurement_noise_3x3) tuples.
    Propagation over each interval uses the IMU reading at its start;
    output states are recorded at every IMU stamp, post-update when a fix
    landed inside the preceding interval. Fixes failing the gate skip the
    update entirely and are reported with their distance.
    """
    if config is None:
        config = EkfConfig()
    state = init_state
    cov = np.asarray(init_cov, dtype=float).copy()

    gnss_iter = iter(sorted(gnss_enu, key=lambda g: g[0]))
    next_fix = next(gnss_iter, None)

    stamps, states, covs = [], [], []
    rejected = []
    accepted = 0

    prev_imu = imu_samples[0]
    prev_t = prev_imu.stamp
    for k, imu in enumerate(imu_samples):
        # fixes that arrived before this sample
        while next_fix is not None and next_fix[0] <= imu.stamp:
            t_fix, z, r = next_fix
            if t_fix - prev_t > 1e-9:
                state, cov = _predict_span(state, cov, prev_imu,
                                           t_fix - prev_t, config)
                prev_t = t_fix
            cand_state, cand_cov, trace = ekf_update(state, cov, z, r)
            if mahalanobis_gate(trace, config.mahalanobis_threshold):
                state, cov = cand_state, cand_cov
                accepted += 1
            else:
                rejected.append((t_fix, trace.mahalanobis))
            next_fix = next(gnss_iter, None)

        if k > 0 and imu.stamp - prev_t > 1e-9:
            state, cov = _predict_span(state, cov, prev_imu,
                                       imu.stamp - prev_t, config)
        prev_t = imu.stamp
        prev_imu = imu
        stamps.append(imu.stamp)
        states.append(state)
        covs.append(cov)

    return FilterResult(
        stamps=np.array(stamps), states=states, covariances=covs,
        rejected_fixes=rejected, accepted_fixes=accepted,
    )


def rts_smooth(result: FilterResult, imu_samples, config: EkfConfig | None = None):
    """Backward Rauch-Tung-Striebel pass over a forward filter run.

    Re-runs the prediction model between stored posteriors to recover the
    per-step transition, then blends backwards on the error state. Returns
    smoothed position/velocity arrays (orientation and biases are carried
    through the same correction).
    """
    if config is None:
        config = EkfConfig()
    n = len(result.states)
    states = list(result.states)
    covs = [c.copy() for c in result.covariances]

    smoothed = [None] * n
    smoothed_cov = [None] * n
    smoothed[-1] = states[-1]
    smoothed_cov[-1] = covs[-1]

    for k in range(n - 2, -1, -1):
        dt = result.stamps[k + 1] - result.stamps[k]
        if dt <= 1e-9:
            smoothed[k] = states[k]
            smoothed_cov[k] = covs[k]
            continue
        pred_state, pred_cov = ekf_predict(
            states[k], covs[k], imu_samples[k + 1], min(dt, 0.1), config)
        r = quat_to_matrix(states[k].orientation)
        f = imu_samples[k + 1].accel - states[k].accel_bias
        omega = imu_samples[k + 1].gyro - states[k].gyro_bias
        f_mat = np.eye(15)
        f_mat[0:3, 3:6] = np.eye(3) * dt
        f_mat[3:6, 6:9] = -r @ skew(f) * dt
        f_mat[3:6, 9:12] = -r * dt
        f_mat[6:9, 6:9] = quat_to_matrix(quat_from_rotvec(omega * dt)).T
        f_mat[6:9, 12:15] = -np.eye(3) * dt

        try:
            gain = covs[k] @ f_mat.T @ np.linalg.inv(pred_cov)
        except np.linalg.LinAlgError:
            smoothed[k] = states[k]
            smoothed_cov[k] = covs[k]
            continue
        # error between the smoothed successor and its prediction
        dq = quat_multiply(quat_conjugate(pred_state.orientation),
                           smoothed[k + 1].orientation)
        delta = np.concatenate([
            smoothed[k + 1].position - pred_state.position,
            smoothed[k + 1].velocity - pred_state.velocity,
            quat_to_rotvec(dq),
            smoothed[k + 1].accel_bias - pred_state.accel_bias,
            smoothed[k + 1].gyro_bias - pred_state.gyro_bias,
        ])
        dx = gain @ delta
        smoothed[k] = replace(
            states[k],
            position=states[k].position + dx[0:3],
            velocity=states[k].velocity + dx[3:6],
            orientation=quat_multiply(states[k].orientation,
                                      quat_from_rotvec(dx[6:9])),
            accel_bias=states[k].accel_bias + dx[9:12],
            gyro_bias=states[k].gyro_bias + dx[12:15],
        )
        smoothed_cov[k] = _symmetrize(
            covs[k] + gain @ (smoothed_cov[k + 1] - pred_cov) @ gain.T)

    return FilterResult(
        stamps=result.stamps, states=smoothed, covariances=smoothed_cov,
        rejected_fixes=result.rejected_fixes, accepted_fixes=result.accepted_fixes,
    )

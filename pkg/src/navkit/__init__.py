"""navkit: SE2(3) Lie-group inertial navigation toolkit."""
from .se23 import (
    SE23,
    AngleAtPi,
    NotARotation,
    TangentVector,
    se23_exp,
    se23_log,
    skew,
    so3_exp,
    so3_left_jacobian,
    so3_left_jacobian_inv,
    so3_log,
    unskew,
    vee5,
    wedge5,
)
from .earth import (
    EarthParams,
    GravityModel,
    SingularRadius,
    SphericalGravity,
    UniformGravity,
    WorldFrameDef,
    earth_rate,
    frame_transform,
    gravitation,
    gravitation_gradient,
    gravity,
    ned_world,
)
from .mechanization import (
    Frame,
    FrameMismatch,
    Grouping,
    ImuSample,
    NavState,
    WDecomposition,
    body_velocity,
    derivative,
    frame_velocity,
    from_proposed,
    make_nav_state,
    nav_from_physical,
    physical_from_nav,
    step,
    to_proposed,
)
from .error_models import (
    AutonomyClass,
    ErrorConvention,
    ErrorState,
    ModelVariant,
    apply_correction,
    classify_autonomy,
    error_from_states,
    error_to_vector,
    exact_error_derivative,
    linearized_F_G,
    vector_to_error,
)
from .lgekf import (
    CovarianceNotPSD,
    FilterState,
    NoiseConfig,
    OdoSample,
    SingularInnovation,
    check_covariance,
    odo_H,
    predict,
    update,
)
from .rng import (
    STREAM_ACCEL_BIAS_WALK,
    STREAM_ACCEL_NOISE,
    STREAM_GYRO_BIAS_WALK,
    STREAM_GYRO_NOISE,
    STREAM_INIT_BIAS,
    STREAM_INIT_STATE,
    STREAM_ODOMETER,
    GaussianStream,
    substream,
)
from .simulate import (
    AutonomyResult,
    AutonomySettings,
    Climb,
    MonteCarloResult,
    Rest,
    RunConfig,
    RunResult,
    SensorErrors,
    SpecInvalid,
    Straight,
    TrajectorySpec,
    TruthSeries,
    Turn,
    autonomy_experiment,
    corrupt,
    draw_biases,
    gen_odometer,
    gen_truth,
    inverse_imu,
    run_monte_carlo,
    run_single,
    true_bias_series,
)
from .config import (
    ConfigError,
    apply_overrides,
    build_autonomy_inputs,
    build_run_config,
    build_trajectory,
    config_hash,
    load_config,
    resolve,
)

__version__ = "0.1.0"

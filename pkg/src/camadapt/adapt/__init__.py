"""Camera adaptation, the frozen servo policy and closed-loop episodes."""

from .adapter import (
    AUTO,
    AdaptError,
    AdapterMethod,
    DepthReprojection,
    FrameSet,
    Homography,
    IdMismatchError,
    Identity,
    MissingDepthError,
    MissingPlaneError,
    RemoteFailure,
    RemoteNvs,
    View,
    adapt,
    timed_adapt,
)
from .episode import (
    AGENT,
    WRIST,
    EpisodeReport,
    StepRow,
    ViewQuality,
    default_train_rig,
    render_frames,
    run_episode,
    run_step,
)
from .policy import (
    Action,
    CalibrationError,
    PixelToWorldMap,
    Segmenter,
    ServoPolicy,
    TaskSpec,
    calibrate,
    servo_policy,
)

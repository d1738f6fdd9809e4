"""Per-recording glue: traces to pulse, pulse to reference lag."""
from .errors import RppgError
from .filtering import bandpass
from .model import predict_recording
from .signal_core import PpgSignal
from .sync import align_to_reference
from .unsupervised import METHODS, RgbTrace, reconstruct


def reconstruct_traces(traces, method, model=None, scaler=None):
    """Pulse signal on the frame grid, starting at the first frame timestamp.

    Unsupervised methods run on the ROI-averaged RGB trace; ``"model"`` runs the
    network on all ROI channels.
    """
    t0 = float(traces.frame_timestamps_s[0])
    if method == "model":
        if model is None:
            raise RppgError("method 'model' needs a checkpoint")
        return predict_recording(model, scaler, traces)["ppg"]
    if method not in METHODS:
        raise RppgError(f"unknown method {method!r}")
    h = reconstruct(RgbTrace.from_array(traces.mean_rgb(), traces.fps), method)
    return PpgSignal(h.samples, traces.fps, t0)


def ppg_shift(traces, reference, method="pos", max_shift_samples=None, model=None, scaler=None):
    """Lag of the reconstructed pulse behind the band-passed reference, in reference samples."""
    rec = bandpass(reconstruct_traces(traces, method, model, scaler))
    return align_to_reference(bandpass(reference), rec, max_shift_samples)

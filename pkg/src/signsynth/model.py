"""Full conditional latent diffusion model over modality bundles.

Glues the modality encoders, motion aggregation, frozen foundation stub,
latent codec, noise schedule, and U-Net denoiser into one parameter
registry with a hand-written end-to-end backward pass for the
noise-prediction loss.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from . import ops
from .aggregation import init_aggregation_params
from .codec import LatentCodec
from .encoders import (
    CompositionConfig,
    FoundationStub,
    appearance_backward,
    appearance_forward,
    compose_condition,
    compose_condition_backward,
    encoder_backward,
    encoder_forward,
    init_encoder_params,
)
from .errors import ConfigError, NonFiniteError, ShapeError
from .params import make_rng
from .schedule import make_schedule, q_sample
from .unet import DenoiserConfig, denoise_backward, denoise_forward, init_denoiser_params


@dataclass(frozen=True)
class ModelConfig:
    c_img: int = 3
    channels: int = 8  # modality feature width
    enc_stride: int = 4  # total spatial downscale of the encoders
    base_width: int = 16  # U-Net base channels
    c_app: int = 16  # appearance embedding width
    d_time: int = 16  # step embedding width
    patch: int = 4  # codec patch size; must equal enc_stride
    stub_hidden: int = 16
    stub_seed: int = 701
    codec_seed: int = 702
    lambda_motion: float = 0.01
    enable_motion: bool = True
    enable_foundation: bool = True
    timesteps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02

    def __post_init__(self):
        if self.patch != self.enc_stride:
            raise ConfigError(
                f"patch ({self.patch}) must equal enc_stride ({self.enc_stride}) "
                "so the condition grid matches the latent grid"
            )
        if self.lambda_motion < 0.0:
            raise ConfigError(f"lambda_motion must be non-negative, got {self.lambda_motion}")
        for name in ("c_img", "channels", "base_width", "c_app", "d_time", "stub_hidden", "timesteps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")

    @property
    def c_lat(self):
        return self.patch * self.patch * self.c_img

    def composition(self):
        return CompositionConfig(
            lam=self.lambda_motion,
            enable_motion=self.enable_motion,
            enable_foundation=self.enable_foundation,
        )

    def denoiser(self):
        return DenoiserConfig(
            c_lat=self.c_lat,
            c_cond=self.channels,
            base=self.base_width,
            d_time=self.d_time,
            c_app=self.c_app,
            timesteps=self.timesteps,
            beta_start=self.beta_start,
            beta_end=self.beta_end,
        )


@dataclass
class ModalityBundle:
    """One training/eval item: conditioning maps plus the target clip."""

    pose_map: np.ndarray  # (c_img, t, H, W)
    hand_map: np.ndarray
    face_map: np.ndarray
    reference_image: np.ndarray  # (c_img, H, W)
    target_clip: np.ndarray  # (c_img, t, H, W)

    def validate(self):
        shape = self.target_clip.shape
        for name in ("pose_map", "hand_map", "face_map"):
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ShapeError(f"{name} shape {arr.shape} != target shape {shape}")
        if self.reference_image.shape != (shape[0],) + shape[2:]:
            raise ShapeError(
                f"reference shape {self.reference_image.shape} incompatible with target {shape}"
            )
        for name in ("pose_map", "hand_map", "face_map", "reference_image", "target_clip"):
            arr = getattr(self, name)
            if not np.isfinite(arr).all():
                raise NonFiniteError(f"non-finite values in {name}")
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise ShapeError(f"{name} values outside [0, 1]")
        return self

    def as_dict(self):
        return {
            "pose": self.pose_map,
            "hand": self.hand_map,
            "face": self.face_map,
            "reference": self.reference_image,
            "target": self.target_clip,
        }

    @classmethod
    def from_dict(cls, tensors):
        return cls(
            pose_map=tensors["pose"],
            hand_map=tensors["hand"],
            face_map=tensors["face"],
            reference_image=tensors["reference"],
            target_clip=tensors["target"],
        )


class SignDiffusionModel:
    """Owns the parameter registry plus the frozen codec, stub, and schedule."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.sched = make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)
        self.codec = LatentCodec.from_seed(cfg.patch, cfg.c_img, cfg.codec_seed)
        self.stub = FoundationStub.create(cfg.stub_seed, 2 * cfg.channels, cfg.stub_hidden, cfg.channels)

    def init_params(self, seed):
        rng = make_rng("model-init", seed)
        params = {}
        for which in ("pose", "hand", "face"):
            init_encoder_params(params, f"enc.{which}", self.cfg.c_img, self.cfg.channels, rng)
        init_encoder_params(params, "enc.app", self.cfg.c_img, self.cfg.c_app, rng)
        init_aggregation_params(params, self.cfg.channels, rng)
        init_denoiser_params(params, self.cfg.denoiser(), rng)
        return params

    # -- condition stream ------------------------------------------------

    def condition_forward(self, params, bundle):
        stride = self.cfg.enc_stride
        f_pose, c_pose = encoder_forward(bundle.pose_map, params, "enc.pose", stride)
        f_hand, c_hand = encoder_forward(bundle.hand_map, params, "enc.hand", stride)
        f_face, c_face = encoder_forward(bundle.face_map, params, "enc.face", stride)
        cond, c_comp = compose_condition(f_pose, f_hand, f_face, self.stub, params, self.cfg.composition())
        app, c_app = appearance_forward(bundle.reference_image, params, stride)
        cache = {"pose": c_pose, "hand": c_hand, "face": c_face, "comp": c_comp, "app": c_app}
        return cond, app, cache

    def condition_backward(self, params, g_cond, g_app, cache, grads):
        g_pose, g_hand, g_face = compose_condition_backward(g_cond, cache["comp"], self.stub, params, grads)
        encoder_backward(g_pose, cache["pose"], params, "enc.pose", grads)
        encoder_backward(g_hand, cache["hand"], params, "enc.hand", grads)
        encoder_backward(g_face, cache["face"], params, "enc.face", grads)
        appearance_backward(g_app, cache["app"], params, grads)

    # -- loss -------------------------------------------------------------

    def loss_forward(self, params, items, draws, temporal_enabled=False):
        """Mean per-coordinate squared error of noise prediction.

        items: list of (z0, cond, app); draws: list of (t, eps) fixed per item.
        """
        if not items:
            raise ShapeError("empty batch")
        if len(items) != len(draws):
            raise ShapeError(f"{len(items)} items but {len(draws)} draws")
        per_item = []
        caches = []
        dcfg = self.cfg.denoiser()
        for (z0, cond, app), (t, eps) in zip(items, draws):
            z_t = q_sample(z0, t, eps, self.sched)
            eps_hat, dcache = denoise_forward(z_t, t, cond, app, params, dcfg, temporal_enabled)
            diff = eps_hat - eps
            per_item.append(np.mean(diff * diff))
            caches.append({"denoise": dcache, "diff": diff})
        loss = float(np.mean(per_item))
        if not np.isfinite(loss):
            raise NonFiniteError("non-finite diffusion loss")
        return loss, {"items": caches, "temporal_enabled": temporal_enabled}

    def loss_backward(self, params, cache, grads):
        """Returns per-item (g_cond, g_app); parameter grads accumulate in ``grads``."""
        dcfg = self.cfg.denoiser()
        n = len(cache["items"])
        out = []
        for item in cache["items"]:
            diff = item["diff"]
            g_eps = (2.0 / (n * diff.size)) * diff
            _, g_cond, g_app = denoise_backward(g_eps, item["denoise"], params, dcfg, grads)
            out.append((g_cond, g_app))
        return out

    def training_loss_and_grads(self, params, bundles, draws, temporal_enabled=False):
        """Full-pipeline loss and grads: encoders, aggregation, stub inputs, U-Net."""
        items = []
        cond_caches = []
        for bundle in bundles:
            cond, app, ccache = self.condition_forward(params, bundle)
            z0 = self.codec.encode(bundle.target_clip)
            items.append((z0, cond, app))
            cond_caches.append(ccache)
        loss, lcache = self.loss_forward(params, items, draws, temporal_enabled)
        grads = {}
        for (g_cond, g_app), ccache in zip(self.loss_backward(params, lcache, grads), cond_caches):
            self.condition_backward(params, g_cond, g_app, ccache, grads)
        return loss, grads


def diffusion_loss(items, params, model, rng, temporal_enabled=False):
    """Draw (t, eps) per item uniformly and evaluate the noise-prediction loss."""
    draws = []
    for z0, _, _ in items:
        t = int(rng.integers(1, model.sched.steps + 1))
        eps = rng.standard_normal(z0.shape)
        draws.append((t, eps))
    loss, _ = model.loss_forward(params, items, draws, temporal_enabled)
    return loss


def save_bundle(dirpath, bundle):
    from . import sgt1

    sgt1.write_tensor_dir(dirpath, bundle.as_dict())


def load_bundle(dirpath):
    from . import sgt1

    return ModalityBundle.from_dict(sgt1.read_tensor_dir(dirpath)).validate()

"""Short and realistic latent-space interpolation for small GANs.

Paths are polynomials in latent space whose discrete energy combines the
length of the generated path with a penalty on low discriminator values.
"""
__version__ = "0.1.0"

from .datasets import LatentPrior, SwissRollSpec, gen_swiss_roll, sample_latent  # noqa: F401
from .gan import (CriticCalibration, GanModel, calibrate_critic, critic_normalized,  # noqa: F401
                  load_model, save_model, train_vanilla_gan, train_wgan_gp)
from .geodesic import (GeodesicConfig, MethodSpec, PolyCurve, energy, energy_grad,  # noqa: F401
                       ensemble_optimize, linear_path, optimize_path)

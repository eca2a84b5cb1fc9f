from .errors import *
from .geometry import Image, Geometry, make_geometry, coordinates_of, make_shepp_logan
from .tomo import (Sinogram, NoiseSpec, radon_forward, radon_adjoint, fbp, add_noise,
                   merge_sinograms)
from .field import (FfmConfig, MlpConfig, TrainConfig, NeuralField, full_mlp, desk_mlp,
                    ffm_apply, field_forward, field_loss_and_grad, train_field,
                    fit_sinogram_field, query_field, save_field, load_field)
from .denoisers import DenoiserSpec, denoise
from .solvers import (DataFidelity, SolverConfig, grad_data, tv_value, tv_prox, fista_tv,
                      gm_red, pnp_fista, power_iteration)
from .metricsio import (MetricRecord, snr_db, write_image_pgm, write_array, read_array,
                        append_metrics_csv)

__version__ = '0.1.0'

"""Textured monocular 3D face reconstruction by analysis-by-synthesis."""

from .assets import build_toy_head, load_basis, procedural_texture, save_basis
from .attention import attention_backward, cross_attend, patch_tokens
from .autodiff import GradStore, Tape, Var, backward
from .blendmodel import (BlendshapeBasis, FaceParams, apply_pose,
                         params_landmarks_2d, posed_mesh, project,
                         reconstruct_mesh, select_landmarks)
from .errors import (DegenerateInputError, InvalidArgumentError,
                     OptimizationFailureError)
from .losses import (LossWeights, dct_embedding, identity_loss, landmark_loss,
                     reg_loss, texture_loss, total_loss, vis_texture_loss,
                     visibility_loss)
from .masking import (BinaryMask, combine_mask, completion_prior,
                      make_patch_mask, uv_visibility, visible_texel_mask)
from .optim import AdamState, adam_init, adam_step, lr_schedule
from .pipeline import (FitConfig, FitResult, SynthTarget, export, fit,
                       synth_target)
from .raster import FragmentBuffer, rasterize, vertex_normals
from .refinement import (PoseSample, augment_render, refine_pose_camera,
                         sample_pose)
from .render import RenderOutput, pixel_geometry, render
from .shading import UvTexture, sh_basis, sh_shade, uv_sample

__version__ = "0.1.0"

from .images import load_image, read_ppm, save_image, to_uint8, write_ppm
from .metrics import mean_psnr, psnr
from .mnist import (IDX_IMAGE_MAGIC, IdxFormatError, load_mnist_idx, read_idx_images,
                    sklearn_digit_pool, write_idx_images)
from .multiview import (MultiviewScene, SceneSpec, Sphere, camera_ring, generate_multiview,
                        holdout_split, load_multiview, random_scene, save_multiview)
from .tiled import TiledMnistSpec, digit_layout, make_tiled_mnist, tiled_batch

__all__ = [
    "IDX_IMAGE_MAGIC", "IdxFormatError", "MultiviewScene", "SceneSpec", "Sphere", "TiledMnistSpec",
    "camera_ring", "digit_layout", "generate_multiview", "holdout_split", "load_image",
    "load_mnist_idx", "load_multiview", "make_tiled_mnist", "mean_psnr", "psnr", "random_scene",
    "read_idx_images", "read_ppm", "save_image", "save_multiview", "sklearn_digit_pool",
    "tiled_batch", "to_uint8", "write_idx_images", "write_ppm",
]

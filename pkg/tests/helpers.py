"""Small model and camera builders shared across test modules."""

import numpy as np
import torch

from stylefield.field import RadianceModel
from stylefield.geometry import BoundingBox
from stylefield.hashgrid import HashGridConfig
from stylefield.rendering import Camera


def make_tiny_model(num_styles=2, num_scene_regions=3, seed=11, randomize_tables=True):
    box = BoundingBox(np.zeros(3), np.ones(3))
    geo = HashGridConfig(
        num_levels=4,
        base_resolution=4,
        per_level_scale=1.5,
        features_per_level=2,
        table_size=1 << 10,
        num_styles=1,
        bounding_box=box,
    )
    app = HashGridConfig(
        num_levels=4,
        base_resolution=4,
        per_level_scale=1.5,
        features_per_level=2,
        table_size=1 << 10,
        num_styles=num_styles,
        bounding_box=box,
    )
    model = RadianceModel(geo, app, num_scene_regions=num_scene_regions, seed=seed)
    if randomize_tables:
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            model.geometry_grid.table.normal_(0.0, 0.5, generator=gen)
            model.appearance_grid.table.normal_(0.0, 0.5, generator=gen)
    return model


def make_front_camera(size=16, near=0.1, far=5.0):
    pose = np.eye(4)
    pose[:3, 3] = [0.5, 0.5, -1.5]
    f = size * 0.8
    return Camera(
        width=size,
        height=size,
        fx=f,
        fy=f,
        cx=size / 2,
        cy=size / 2,
        camera_to_world=pose,
        near=near,
        far=far,
    )

from .records import Dataset, SampleRecord, check_dims, parse_dims
from .synth import Box, SceneSpec, generate_record, rasterize_depth, render_scene, sample_scene, synth_generate
from .dataset_io import dataset_from_bytes, dataset_to_bytes, load_dataset, save_dataset
from .preprocess import center_crop, ingest, preprocess, resize_bilinear, split
from .dump import dump_diff, dump_image, dump_map

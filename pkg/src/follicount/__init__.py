"""Automatic identification and counting of nongrowing ovarian follicles
in PCNA-stained micrographs."""

from follicount.raster import RasterImage, GrayImage, BitMask, Histogram, load_image, save_image, to_gray, histogram
from follicount.threshold import (
    DegenerateHistogram,
    ThresholdLevel,
    binarize,
    max_entropy_threshold,
    triangle_threshold,
)
from follicount.regions import Region, ShapeDescriptors, label_components, shape_descriptors, filter_by_size
from follicount.chromatics import ChannelStats, channel_stats
from follicount.settings import DetectionSettings, load_profiles
from follicount.detector import count_image, detect_100, detect_200
from follicount.census import ImageCount

__version__ = "0.1.0"

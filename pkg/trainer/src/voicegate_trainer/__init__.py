"""Desk-scale trainers producing weight bundles for the voicegate runtime."""

from .data import make_speakers, synthesize_corpus
from .export import ArchitectureDriftError, export_dvector_bundle, export_keyword_bundle
from .models import DvectorNet, KeywordNet
from .train import TrainConfig, train_dvector, train_keyword

__version__ = "0.1.0"

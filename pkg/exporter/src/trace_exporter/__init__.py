"""Bridge from a speech-translation model to the simulag JSONL trace schema.

For each utterance and each audio prefix on the segment schedule, the
exporter asks a model backend for the from-scratch beam hypothesis, the
encoder-decoder attention of the configured decoder layers, and the
CTC-detected source-word count, then emits one schema-1 trace record per
utterance.
"""

from trace_exporter.backend import MockBackend, ModelBackend, PrefixDecode
from trace_exporter.export import ExportConfig, ExportReport, Utterance, export_corpus, read_manifest

__version__ = "0.1.0"

__all__ = [
    "ExportConfig",
    "ExportReport",
    "MockBackend",
    "ModelBackend",
    "PrefixDecode",
    "Utterance",
    "export_corpus",
    "read_manifest",
]

from .corpus import CorpusError, Document, Entity, read_jsonl, write_jsonl
from .schema import NULL_NAME, EventRecord, Schema, SchemaError
from .scoring import Counts, ScoreReport, match_document, score
from .synth import GenConfig, GenConfigError, build_schema, corpus_stats, generate, inventory

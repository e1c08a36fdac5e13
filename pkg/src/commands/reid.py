# src/commands/reid.py
# `reid-eval` subcommand: retrieval quality of query embeddings against a gallery
# Reports mAP and CMC at the configured ranks in percent, plus threshold separation
# RELEVANT FILES: base.py, ../evalkit.py, ../storage.py

from ..config import get_settings
from ..evalkit import cmc_map, pair_similarities, similarity_separation, top_k_retrieval
from ..schemas import DEFAULT_TAU, RunConfig
from ..storage import read_labelled_embeddings, write_json
from .base import BaseCommand, CommandResult

# Gallery items listed per query in the output document
RETRIEVAL_DEPTH = 10


class ReidEvalCommand(BaseCommand):
    """Score an embedding set with CMC and mAP"""

    name = "reid-eval"

    def execute(self, config: RunConfig) -> CommandResult:
        settings = get_settings()
        query_path = self._require(config.query_path, "--query")
        gallery_path = self._require(config.gallery_path, "--gallery")

        query = read_labelled_embeddings(query_path)
        gallery = read_labelled_embeddings(gallery_path)

        max_rank = max([config.max_rank, *settings.reid_report_ranks])
        metrics = cmc_map(query, gallery, max_rank=max_rank)
        if config.tau is not None:
            tau = config.tau
        else:
            tau = config.zone.tau if config.zone is not None else DEFAULT_TAU
        separation = similarity_separation(*pair_similarities(query, gallery), tau=tau)

        decimals = settings.percent_decimals
        percentages = {"mAP": round(100.0 * metrics.mean_average_precision, decimals)}
        for k in settings.reid_report_ranks:
            percentages[f"rank{k}"] = round(100.0 * metrics.rank(k), decimals)

        if config.output_path is not None:
            listing = top_k_retrieval(query, gallery, RETRIEVAL_DEPTH)
            write_json(
                config.output_path,
                {
                    "schema_version": settings.schema_version,
                    "metrics": metrics.model_dump(mode="json"),
                    "percentages": percentages,
                    "separation": separation.model_dump(mode="json"),
                    "retrieval": [
                        {
                            "query_index": q,
                            "identity": query[q][1],
                            "hits": [hit.model_dump(mode="json") for hit in hits],
                        }
                        for q, hits in enumerate(listing)
                    ],
                },
            )

        ranks = " ".join(
            f"Rank-{k} {percentages[f'rank{k}']:.{decimals}f}" for k in settings.reid_report_ranks
        )
        return CommandResult(
            success=True,
            data=percentages,
            message=f"mAP {percentages['mAP']:.{decimals}f} {ranks}",
        )


def cmd_reid_eval(config: RunConfig) -> int:
    """Run the reid-eval subcommand; returns the process exit status"""
    return ReidEvalCommand().run(config).exit_code

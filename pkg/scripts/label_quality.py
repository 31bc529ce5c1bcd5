"""Pseudo-label quality as character noise and the margin threshold vary."""
import click

from erpipe.embeddings import EmbeddingProvider, EmbeddingProviderSpec, similarity_from_embeddings
from erpipe.evaluation import GroundTruth, score_labels
from erpipe.labels import RplgConfig, rplg, snlg
from erpipe.synthetic import SyntheticSpec, make_synthetic


@click.command()
@click.option("--rates", default="0,0.05,0.1,0.2", show_default=True)
@click.option("--thetas", default="0,0.03,0.1", show_default=True)
@click.option("--size", type=int, default=500, show_default=True)
@click.option("--matches", type=int, default=300, show_default=True)
def main(rates, thetas, size, matches):
    provider = EmbeddingProvider(EmbeddingProviderSpec())
    click.echo(f"{'noise':>6} {'theta':>6} {'P':>5} {'TPR':>6} {'N':>6} {'TNR':>6}")
    for rate in (float(r) for r in rates.split(",")):
        left, right, truth = make_synthetic(SyntheticSpec(size, size, matches, rate, 0.0, 0.05, seed=0))
        EL, ER = provider.embed_dataset(left), provider.embed_dataset(right)
        M = similarity_from_embeddings(EL, ER, left.ids, right.ids)
        for theta in (float(t) for t in thetas.split(",")):
            P = rplg(M, RplgConfig(theta))
            N = snlg(EL, ER, left.ids, right.ids, P) if len(P) else None
            q = score_labels(P, N, GroundTruth.from_pairs(truth)) if N is not None else None
            if q is None:
                click.echo(f"{rate:>6} {theta:>6} {0:>5}")
                continue
            click.echo(f"{rate:>6} {theta:>6} {len(P):>5} {q.tpr:>6.3f} {len(N):>6} {q.tnr:>6.3f}")


if __name__ == "__main__":
    main()

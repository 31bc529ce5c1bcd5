"""Node and edge counts of MRGC against the tripartite reference across dataset sizes."""
import click

from erpipe.relgraph import graph_stats, mrgc, reference_graph
from erpipe.synthetic import SyntheticSpec, make_synthetic


@click.command()
@click.option("--sizes", default="100,500,1000,5000", show_default=True)
@click.option("--seed", type=int, default=0)
def main(sizes, seed):
    click.echo(f"{'tuples':>7} {'mrgc nodes':>11} {'ref nodes':>10} {'mrgc edges':>11} {'ref edges':>10}")
    for n in (int(s) for s in sizes.split(",")):
        left, _, _ = make_synthetic(SyntheticSpec(n, n, 0, seed=seed))
        g, r = graph_stats(mrgc(left)), reference_graph(left)
        click.echo(f"{n:>7} {g.nodes:>11} {r.nodes:>10} {g.edges:>11} {r.edges:>10}")


if __name__ == "__main__":
    main()

"""CLI wrapper around the training loop; flags mirror TrainConfig."""

from __future__ import annotations

from pathlib import Path

import click

from .train import TrainConfig, train


@click.command()
@click.option("--manifest", required=True, type=click.Path(path_type=Path),
              help="Caption-pair manifest (JSONL).")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--epochs", type=int, default=16, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--beta1", type=float, default=0.9, show_default=True)
@click.option("--beta2", type=float, default=0.98, show_default=True)
@click.option("--epsilon", type=float, default=1e-6, show_default=True)
@click.option("--weight-decay", type=float, default=0.2, show_default=True)
@click.option("--peak-lr", type=float, default=1e-5, show_default=True)
@click.option("--warmup-fraction", type=float, default=0.1, show_default=True)
@click.option("--val-fraction", type=float, default=0.1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--resume", "resume_from", type=click.Path(path_type=Path),
              help="Checkpoint file to resume from.")
def main(manifest, out_dir, epochs, batch_size, beta1, beta2, epsilon,
         weight_decay, peak_lr, warmup_fraction, val_fraction, seed,
         resume_from) -> None:
    """Fine-tune the two-tower encoder on a map-caption manifest."""
    cfg = TrainConfig(
        epochs=epochs, batch_size=batch_size, beta1=beta1, beta2=beta2,
        epsilon=epsilon, weight_decay=weight_decay, peak_lr=peak_lr,
        warmup_fraction=warmup_fraction, val_fraction=val_fraction, seed=seed,
    )
    records, checkpoint = train(manifest, cfg, out_dir, resume_from=resume_from)
    for record in records:
        val = ("" if record.validation_loss is None
               else f"  val={record.validation_loss:.4f}")
        click.echo(
            f"epoch {record.epoch:>3}  avg={record.average_loss:.4f}  "
            f"total={record.total_loss:.2f}  batches={record.batches}{val}"
        )
    click.echo(f"checkpoint -> {checkpoint}")


if __name__ == "__main__":
    main()

import os

from collapse import dynamics, runlog, runner
from collapse.management.base import NclabCommand, float_list, int_list


class Command(NclabCommand):
    help = "Rescale the final hidden layer at the Phase-1 checkpoint and resume Phase 2"

    def add_arguments(self, parser):
        parser.add_argument("run", help="Run directory holding checkpoint_phase1.npz")
        parser.add_argument(
            "--alpha",
            type=float_list,
            default=[0.3, 1.0, 3.0],
            help="Comma-separated scale factors; 1.0 (control) is always included",
        )
        parser.add_argument("--seeds", type=int_list, help="Phase-2 seeds (default: the run's)")
        parser.add_argument("--epochs-phase2", type=int, dest="epochs_phase2")
        self.add_data_arguments(parser)

    def handle(self, *args, **options):
        run_dir = options["run"]
        manifest = runlog.load_manifest(os.path.join(run_dir, runlog.MANIFEST_FILE))
        checkpoint, meta = runlog.load_checkpoint(os.path.join(run_dir, runlog.CHECKPOINT_FILE))
        data = runner.load_dataset(manifest, options["data_dir"])

        spec = dynamics.InterventionSpec(
            alphas=tuple(options["alpha"]),
            seeds=tuple(options["seeds"] or manifest.seeds),
            phase2_epochs=options["epochs_phase2"],
        )
        out = options["out"] or os.path.join(run_dir, "intervention")
        runner.prepare_run_dir(out, options["force"])
        self.stdout.write(
            f"Intervening at epoch {meta['epoch']} of {run_dir}: alphas {list(spec.alphas)}"
        )

        result = dynamics.run_intervention(spec, manifest.config, data, checkpoint)
        for alpha, seed in result.records:
            runner.save_finished_run(
                os.path.join(out, dynamics.condition_dir_name(alpha, seed)),
                dynamics.condition_manifest(manifest, result, alpha, seed, meta["sha256"]),
                result.records[alpha, seed],
            )
        dynamics.write_intervention_table(os.path.join(out, "intervention.csv"), result.rows)

        for row in result.rows:
            line = (
                f"{row.condition} (alpha={row.alpha:g}): fn {row.fn_before:.3f} -> "
                f"{row.fn_after_rescale:.3f}, collapsed {row.n_collapsed}/{row.n}"
            )
            if row.fn_star is not None:
                line += f", fn* {row.fn_star.mean:.4f}"
            if row.p_t_nc_vs_control is not None:
                line += f", p(T_NC)={row.p_t_nc_vs_control:.3g}"
            if row.p_fn_star_vs_control is not None:
                line += f", p(fn*)={row.p_fn_star_vs_control:.3g}"
            self.stdout.write(line)
        self.stdout.write(self.style.SUCCESS(f"Intervention table written to {out}"))

"""
KnobCF: query-level knob classification for DBMS knob tuning.

A tuner proposes knob configurations; for each query a classifier predicts
the latency category the configuration would land in, and queries whose
category has enough execution history are estimated instead of executed.

## Package Structure

```
knobcf_temporal/
├── tuning/         # Numerics and the tuning loop (runs without Temporal)
│   ├── models.py       # Shared Pydantic models
│   ├── knobs.py        # Knob encoding and space union
│   ├── plans.py        # Plan graphs and workloads
│   ├── layers.py       # Dense layers, SGD, early stopping
│   ├── embedding.py    # Bottom-up query embedding + importance head
│   ├── importance.py   # Permutation importance over bagged trees
│   ├── gmm.py          # Latency mixtures and category labels
│   ├── store.py        # Label store and CSV artifacts
│   ├── classifier.py   # Multi-label knob classifier, judge/estimate
│   ├── tuners.py       # LHS, GP-BO and random search
│   ├── backends.py     # Simulator and external-command backends
│   ├── orchestrator.py # The tuning loop and full-eval baseline
│   └── pipeline.py     # pretrain / finetune / tune / report / sweep
│
├── temporal/       # Temporal-specific code
│   ├── activities.py  # Thin wrappers around pipeline commands
│   ├── workflows.py   # Workflow definitions
│   ├── worker.py      # Worker configuration
│   └── client.py      # Workflow trigger/resume
│
├── config/         # Configuration
│   ├── run_config.py      # RunConfig file model
│   ├── timeouts.py        # Activity timeouts
│   └── retry_policies.py  # Retry configuration
│
└── scripts/        # Entry points
    ├── knobcf.py        # CLI (no Temporal)
    ├── run_worker.py    # Start Temporal worker
    └── run_workflow.py  # Trigger Temporal workflow
```

## Usage

### Standalone (no Temporal)
```bash
uv run knobcf --out runs/pretrain pretrain configs/history.json
uv run knobcf --out runs/knobcf tune configs/task.json --checkpoints runs/pretrain
```

### With Temporal
```bash
# Terminal 1: Start worker
uv run python -m knobcf_temporal.scripts.run_worker

# Terminal 2: Trigger workflow
uv run python -m knobcf_temporal.scripts.run_workflow --pretrain ... --tune ...
```

IMPORTANT: Do not add imports here - they trigger Temporal sandbox restrictions.
Import directly from the specific module you need.
"""

__all__: list[str] = []  # Explicit empty exports to encourage direct imports

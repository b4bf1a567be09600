"""Per-layer parameter accounting."""

from dataclasses import dataclass, field


@dataclass
class LayerCount:
    name: str
    params: int
    trainable: bool


@dataclass
class ModelSummary:
    title: str
    layers: list = field(default_factory=list)

    def add(self, name, params, trainable=True):
        self.layers.append(LayerCount(name, params, trainable))

    @property
    def total_params(self):
        return sum(l.params for l in self.layers)

    @property
    def trainable_params(self):
        return sum(l.params for l in self.layers if l.trainable)

    def format_table(self):
        width = max([len(l.name) for l in self.layers] + [len("layer")])
        lines = [self.title, f"{'layer':<{width}}  {'params':>12}  trainable"]
        lines.append("-" * (width + 26))
        for l in self.layers:
            lines.append(f"{l.name:<{width}}  {l.params:>12,}  {'yes' if l.trainable else 'no'}")
        lines.append("-" * (width + 26))
        lines.append(f"{'total':<{width}}  {self.total_params:>12,}")
        lines.append(f"{'trainable':<{width}}  {self.trainable_params:>12,}")
        return "\n".join(lines)

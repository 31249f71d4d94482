"""PyYAML loader that reads floats the YAML 1.2 way.

PyYAML implements YAML 1.1, where ``3.0e6`` (no exponent sign) and ``1e-3``
without a dot are strings. Configuration files use such literals freely, so
the float resolver is replaced by one that accepts them.
"""

import re

import yaml

_FLOAT = re.compile(
    r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""",
    re.X,
)


class Loader(yaml.SafeLoader):
    pass


Loader.yaml_implicit_resolvers = {
    key: [(tag, rx) for tag, rx in resolvers if tag != "tag:yaml.org,2002:float"]
    for key, resolvers in yaml.SafeLoader.yaml_implicit_resolvers.items()
}
Loader.add_implicit_resolver("tag:yaml.org,2002:float", _FLOAT, list("-+0123456789."))


def load(stream):
    return yaml.load(stream, Loader=Loader)


def compose(stream):
    return yaml.compose(stream, Loader=Loader)

from __future__ import annotations
import json
from pathlib import Path
from types import SimpleNamespace
from typing import Any, Dict, Optional, Union
from .exceptions import ConfigError


class Config(SimpleNamespace):
    def __init__(self, d: Optional[Dict]=None, **kwargs):
        if not d: d = dict()
        super(Config, self).__init__(**d, **kwargs)

    def get(self, name, returntype: Union[None, str]=None, 
        default: Any=None, ):
        """
        :param name: The name of the attribute to get.
        :param returntype: The type of the returned attribute. Will force 
            returned object into the specified type.
            Takes None (raw value), 'dict', 'bool', 'list', 'str', 'int', 'float'
        :param default: The default value to return if the attribute is not 
            found or is None
        """
        if getattr(self, name, None) is None:
            return default
        res = getattr(self, name)
        if returntype is None:
            return res
        elif returntype == 'bool':
            return True if res else False
        elif returntype == 'dict':
            return vars(res) if isinstance(res, SimpleNamespace) else dict(res)
        elif returntype == 'list':
            return list(res)
        elif returntype == 'str':
            return str(res)
        elif returntype == 'int':
            return int(res)
        elif returntype == 'float':
            return float(res)
        else:
            raise NotImplementedError(
                "returntype must be one of None, 'dict', 'bool', 'list', 'str', 'int', 'float'")

    def update(self, d: Optional[Dict]=None, skip_none: bool=True, **kwargs):
        """overwrite attributes in place; None values are skipped by default so 
        unset CLI flags don't clobber values loaded from a file"""
        d = dict(d or {}, **kwargs)
        for k, v in d.items():
            if skip_none and v is None:
                continue
            setattr(self, k, v)
        return self

    def to_dict(self) -> Dict:
        return {k: (v.to_dict() if isinstance(v, Config) else v) 
            for k, v in sorted(vars(self).items())}

    @classmethod
    def from_json(cls, path: Union[str, Path]):
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except FileNotFoundError as e:
            raise ConfigError(f"config file {path} does not exist") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        if not isinstance(d, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return cls(d)

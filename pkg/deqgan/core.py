# -*- coding: utf-8 -*-

# python std lib
import copy
import logging
import os
import re

# deqgan imports
from deqgan.constants import CONFIGURABLES, DEFAULTS, VALID_EXAMPLES, VALIDATORS
from deqgan.exceptions import DeqganConfigException

# 3rd party imports
import anyconfig
import appdirs


log = logging.getLogger(__name__)
logging.getLogger("anyconfig").setLevel(logging.ERROR)


class Deqgan():

    def __init__(self):
        """
        Base for the deqgan applications, holds the resolved tool configuration.
        """
        self.conf = self.load_config()

        maxlen = 8 + len(max(dict(self.conf).keys(), key=len))

        for key, value in dict(self.conf).items():
            dots = "." * (maxlen - len(key))
            log.debug(f"{key} {dots} {value}")

        # check validity of configurables
        for validator_key in VALIDATORS.keys():
            if not re.match(VALIDATORS[validator_key], str(self.conf[validator_key])):
                error = f"{validator_key} is malformed"
                example = VALID_EXAMPLES.get(validator_key)

                if example:
                    error += ", " + example

                raise DeqganConfigException(error)

    @property
    def cache_dir(self):
        """
        Directory holding cached ground truth solutions.
        """
        return self.conf.get("DEQGAN_CACHE_DIR") or appdirs.user_cache_dir("deqgan")

    @property
    def workers(self):
        return int(self.conf.get("DEQGAN_WORKERS"))

    def load_config(self):
        """
        Load configuration from configuration files and environment variables.

        Search order, latest has presedence:

          1. hard coded defaults
          2. `/etc/deqgan.yaml`
          3. `/etc/deqgan.d/*.yaml`
          4. `~/.config/deqgan.yaml`
          5. `~/.config/deqgan.d/*.yaml`
          6. environment variables
        """
        environ = os.environ.copy()

        log.debug("Loading configuration defaults")
        conf = copy.deepcopy(DEFAULTS)

        os.environ["XDG_CONFIG_DIRS"] = "/etc"

        site_conf_file = f"{appdirs.site_config_dir('deqgan')}.yaml"
        site_conf_dir = os.path.join(f"{appdirs.site_config_dir('deqgan')}.d", "*.yaml")
        user_conf_file = f"{appdirs.user_config_dir('deqgan')}.yaml"
        user_conf_dir = os.path.join(f"{appdirs.user_config_dir('deqgan')}.d", "*.yaml")

        for conf_file in [site_conf_file, user_conf_file]:
            log.debug(f"Loading configuration file: {conf_file}")
            loaded = anyconfig.load(conf_file, ac_ignore_missing=True) or {}
            anyconfig.merge(conf, self._configurables(loaded))

            conf_dir = site_conf_dir if conf_file == site_conf_file else user_conf_dir
            log.debug(f"Loading configuration files: {conf_dir}")
            loaded = anyconfig.multi_load(conf_dir, ac_ignore_missing=True) or {}
            anyconfig.merge(conf, self._configurables(loaded))

        log.debug("Loading configuration from environment variables")
        anyconfig.merge(conf, self._configurables(environ))

        return conf

    def _configurables(self, data):
        return {
            key: value
            for key, value in dict(data).items()
            if key in CONFIGURABLES
        }

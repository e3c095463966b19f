"""One-call demo topology: two model servers federated by one platform.

Server "alpha" hosts heat-diffusion and noise-map; server "beta" hosts
comfort-index, which calls back into the platform for its sub-models. The
platform mirrors both, so clients see three namespaced processes from a
single access point.
"""

from __future__ import annotations

from dataclasses import dataclass

from .federation import Platform, PlatformConfig, ProviderConfig
from .processes import (
    ComfortIndexExecutor,
    comfort_index_description,
    heat_diffusion_description,
    heat_diffusion_executor,
    noise_map_description,
    noise_map_executor,
)
from .server import ModelServer, ProcessRegistration, ServerConfig


@dataclass
class DemoTopology:
    alpha: ModelServer
    beta: ModelServer
    platform: Platform
    comfort_executor: ComfortIndexExecutor

    @property
    def platform_url(self) -> str:
        return self.platform.url

    @property
    def alpha_url(self) -> str:
        return self.alpha.url

    @property
    def beta_url(self) -> str:
        return self.beta.url

    def endpoints(self) -> dict:
        return {
            "platform": self.platform.url,
            "alpha (heat-diffusion, noise-map)": self.alpha.url,
            "beta (comfort-index)": self.beta.url,
        }

    def stop(self):
        self.platform.stop()
        self.beta.stop()
        self.alpha.stop()


def build_demo(
    platform_port: int = 0,
    alpha_port: int = 0,
    beta_port: int = 0,
    host: str = "127.0.0.1",
    poll_interval_millis: int = 100,
    timeout_millis: int = 10000,
    auth_mode: str = "open",
    token_file: str | None = None,
) -> DemoTopology:
    alpha = ModelServer(ServerConfig(bindAddress=f"{host}:{alpha_port}", serverId="alpha-models"))
    alpha.register_process(ProcessRegistration(heat_diffusion_description(), heat_diffusion_executor))
    alpha.register_process(ProcessRegistration(noise_map_description(), noise_map_executor))
    alpha.start()

    # the executor's platform URL is bound after the platform starts
    comfort = ComfortIndexExecutor(
        platform_url="http://unbound.invalid",
        heat_process_id="alpha:heat-diffusion",
        noise_process_id="alpha:noise-map",
    )
    beta = ModelServer(ServerConfig(bindAddress=f"{host}:{beta_port}", serverId="beta-models"))
    beta.register_process(ProcessRegistration(comfort_index_description(), comfort))
    beta.start()

    platform = Platform(PlatformConfig(
        bindAddress=f"{host}:{platform_port}",
        platformId="demo-platform",
        providers=(
            ProviderConfig(providerId="alpha", baseUrl=alpha.url, timeoutMillis=timeout_millis),
            ProviderConfig(providerId="beta", baseUrl=beta.url, timeoutMillis=timeout_millis),
        ),
        pollIntervalMillis=poll_interval_millis,
        authMode=auth_mode,
        tokenFile=token_file,
    ))
    platform.start()
    comfort.platform_url = platform.url
    return DemoTopology(alpha=alpha, beta=beta, platform=platform, comfort_executor=comfort)


def bundled_registrations(platform_url: str | None = None) -> dict[str, ProcessRegistration]:
    """All bundled processes keyed by ID; comfort-index needs a platform URL."""
    registrations = {
        "heat-diffusion": ProcessRegistration(heat_diffusion_description(), heat_diffusion_executor),
        "noise-map": ProcessRegistration(noise_map_description(), noise_map_executor),
    }
    if platform_url is not None:
        registrations["comfort-index"] = ProcessRegistration(
            comfort_index_description(), ComfortIndexExecutor(platform_url)
        )
    return registrations

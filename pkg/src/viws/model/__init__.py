from viws.model.adversarial import (
    GatedAttentionPool,
    WeatherDiscriminator,
    adversarial_loss,
    grl,
    lambda_schedule,
)
from viws.model.decoder import RefineNet, TemporalFusion, VideoDecoder
from viws.model.encoder import EncoderOutput, TokenGrid, VideoEncoder, encode
from viws.model.messenger import MessengerBank, init_messengers, temporal_shift, temporal_shiftback
from viws.model.network import NetworkOutput, ViWSNet, build_model

__all__ = [
    "EncoderOutput",
    "GatedAttentionPool",
    "MessengerBank",
    "NetworkOutput",
    "RefineNet",
    "TemporalFusion",
    "TokenGrid",
    "VideoDecoder",
    "VideoEncoder",
    "ViWSNet",
    "WeatherDiscriminator",
    "adversarial_loss",
    "build_model",
    "encode",
    "grl",
    "init_messengers",
    "lambda_schedule",
    "temporal_shift",
    "temporal_shiftback",
]

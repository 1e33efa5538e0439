import numpy as np
import pytest

from echobench.core import (
    Contour,
    ImageFrame,
    LabeledFrame,
    MetricPair,
    ModelConfig,
    Normalization,
    Operator,
    ScenarioResult,
    SegMask,
    TrainConfig,
    Upsampling,
    Variant,
)


def test_image_frame_range_and_readonly():
    f = ImageFrame(np.full((4, 6), 0.5), "f0", "p0")
    assert (f.height, f.width) == (4, 6)
    with pytest.raises(ValueError):
        f.pixels[0, 0] = 1.0
    with pytest.raises(ValueError):
        ImageFrame(np.full((4, 4), 1.5))
    with pytest.raises(ValueError):
        ImageFrame(np.zeros(4))


def test_segmask_binary():
    assert SegMask(np.array([[True, False]])).values.dtype == np.uint8
    with pytest.raises(ValueError):
        SegMask(np.array([[0, 2]]))


def test_pair_shapes_checked():
    LabeledFrame(ImageFrame(np.zeros((4, 4))), SegMask(np.zeros((4, 4), np.uint8)))
    with pytest.raises(ValueError):
        LabeledFrame(ImageFrame(np.zeros((4, 4))), SegMask(np.zeros((4, 5), np.uint8)))


def test_empty_contour_is_not_closed():
    assert not Contour().closed
    assert Contour(((1, 2),)).closed


@pytest.mark.parametrize(
    "variant, widths, end, up, norm",
    [
        (Variant.UNET, (64, 128, 256, 512, 1024), 64, Upsampling.DECONVOLUTION, Normalization.NONE),
        (Variant.UNET1, (32, 64, 128), 16, Upsampling.NEAREST_REPEAT, Normalization.NONE),
        (Variant.UNET2, (48, 96, 192, 384, 768), 48, Upsampling.DECONVOLUTION, Normalization.BATCHNORM),
    ],
)
def test_variant_rows(variant, widths, end, up, norm):
    cfg = ModelConfig.for_variant(variant)
    assert cfg.encoder_widths == widths
    assert cfg.decoder_end_width == end
    assert cfg.upsampling is up
    assert cfg.normalization is norm
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


def test_variant_row_mismatch_rejected():
    with pytest.raises(ValueError):
        ModelConfig(Variant.UNET, (32, 64), 32, Upsampling.DECONVOLUTION, Normalization.NONE)


def test_width_scale_too_small():
    with pytest.raises(ValueError):
        ModelConfig.for_variant(Variant.UNET1, width_scale=0.01)


def test_input_size_must_divide():
    with pytest.raises(ValueError):
        ModelConfig.for_variant(Variant.UNET, input_size=40)


def test_train_config_defaults_and_validation():
    t = TrainConfig()
    assert (t.learning_rate, t.epochs, t.batch_size) == (1e-5, 250, 8)
    for bad in (dict(learning_rate=0), dict(epochs=0), dict(batch_size=0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_metric_and_scenario_validation():
    with pytest.raises(ValueError):
        MetricPair(1.2, 0.0)
    with pytest.raises(ValueError):
        MetricPair(0.5, -1.0)
    with pytest.raises(ValueError):
        ScenarioResult("OA_VS_OB", 0.9, 0.1, 4.0, 1.0, 0)


def test_operator_parse():
    assert Operator.parse("a") is Operator.OA
    assert Operator.parse("OB") is Operator.OB
    with pytest.raises(ValueError):
        Operator.parse("C")

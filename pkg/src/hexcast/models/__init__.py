from .baselines import ArimaModel, HistoricalAverage, arima_forecast, ha_forecast
from .nets import CNNNet, ConvLSTMNet, HConvLSTMConfig, LSTMNet, cell_step, cnn_forward, lstm_forward, model_forward, predict_head
from .training import TrainConfig, combined_loss, predict, train_model

__all__ = [
    "ArimaModel", "HistoricalAverage", "arima_forecast", "ha_forecast",
    "CNNNet", "ConvLSTMNet", "HConvLSTMConfig", "LSTMNet", "cell_step", "cnn_forward", "lstm_forward",
    "model_forward", "predict_head", "TrainConfig", "combined_loss", "predict", "train_model",
]

from pydantic_factories import ModelFactory

from facm.harness import EvalRow, TimingRecord


class EvalRowFactory(ModelFactory[EvalRow]):
    __model__ = EvalRow


class TimingRecordFactory(ModelFactory[TimingRecord]):
    __model__ = TimingRecord

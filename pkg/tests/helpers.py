from probselect.fleet import get_gpu
from probselect.model import DeviceProfile


def device(gpu_name, workload, up=100e6, down=700e6, device_id=None, dataset_size=None):
    size = workload.dataset_size if dataset_size is None else dataset_size
    return DeviceProfile(device_id or gpu_name, get_gpu(gpu_name), size, up, down)

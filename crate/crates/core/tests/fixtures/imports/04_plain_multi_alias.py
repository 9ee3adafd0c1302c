import os.path as osp, json

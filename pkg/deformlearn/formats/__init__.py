from deformlearn.formats.annotation import (read_annotation,
                                            write_annotation,
                                            read_annotations,
                                            write_annotations,
                                            read_keypoint_sets,
                                            read_keypoint_records,
                                            write_keypoint_sets)
from deformlearn.formats.theta import (read_theta, write_theta,
                                       read_theta_dir, write_theta_dir,
                                       read_theta_store, write_theta_store)
from deformlearn.formats.uv import UvIndex, uv_to_vertex
from deformlearn.formats.densepose import convert_grid, read_grid
from deformlearn.formats.mesh import (write_obj, read_obj, export_mesh,
                                      write_overlay)

__all__ = ['read_annotation', 'write_annotation', 'read_annotations',
           'write_annotations', 'read_keypoint_sets', 'read_keypoint_records',
           'write_keypoint_sets',
           'read_theta', 'write_theta', 'read_theta_dir', 'write_theta_dir',
           'read_theta_store', 'write_theta_store', 'UvIndex',
           'uv_to_vertex', 'convert_grid', 'read_grid', 'write_obj',
           'read_obj', 'export_mesh', 'write_overlay']

# 导入模块标识

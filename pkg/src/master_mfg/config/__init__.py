"""
設定管理パッケージ。

このパッケージは、プロセス全体の設定と実験設定ドキュメントを管理します。
"""

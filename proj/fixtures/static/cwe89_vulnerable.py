import sqlite3
from flask import Flask, request, jsonify

app = Flask(__name__)
DATABASE = 'users.db'


def get_db_connection():
  conn = sqlite3.connect(DATABASE)
  conn.row_factory = sqlite3.Row
  return conn


@app.route('/user')
def get_user():
  '''
  Get the username from the request arguments, look it up in the
  users table and return the matching row as JSON (404 if absent).
  '''
  username = request.args.get('username')
  conn = get_db_connection()
  cursor = conn.cursor()
  cursor.execute(f"SELECT * FROM users WHERE username = '{username}'")
  user = cursor.fetchone()
  conn.close()
  if user is None:
    return jsonify({'message': 'Not Found'}), 404
  return jsonify(dict(user))
